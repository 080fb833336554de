#include <doctest.h>

#include <cmath>
#include <string>

#include "rflock/scenario.hpp"

using namespace rflock;

namespace {

const std::string kHeader = "timestamp,node_id,inflow_m3s,temp_c,precip_mm,demand_m3s\n";

std::string hourly_rows(const std::string& node, int hours, double inflow0 = 10.0) {
  std::string out;
  for (int h = 0; h < hours; ++h)
    out += format_iso8601(parse_iso8601("2024-03-01T00:00:00Z") + h * 3600) + "," + node + "," +
           std::to_string(inflow0 + h) + ",15.0,0.5,8.0\n";
  return out;
}

}  // namespace

TEST_CASE("ISO 8601") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601("2024-03-01T05:00:00Z") == 1709269200);
  CHECK(parse_iso8601("2024-03-01T05:00") == 1709269200);
  CHECK(format_iso8601(1709269200) == "2024-03-01T05:00:00Z");
  CHECK(parse_iso8601("2000-02-29T12:00:00Z") - parse_iso8601("2000-02-28T12:00:00Z") == 86400);
  CHECK_THROWS_AS(parse_iso8601("yesterday"), Error);
  CHECK_THROWS_AS(parse_iso8601("2024-13-01T00:00:00Z"), Error);
}

TEST_CASE("time-series CSV validation") {
  SUBCASE("well formed") {
    const TimeSeries ts = parse_timeseries_csv(kHeader + hourly_rows("A", 3));
    CHECK(ts.record_count() == 3);
    CHECK(ts.nodes.at("A")[2].inflow_m3s == doctest::Approx(12.0));
  }
  SUBCASE("duplicate timestamp") {
    const std::string rows = hourly_rows("A", 2);
    try {
      parse_timeseries_csv(kHeader + rows + rows.substr(rows.find('\n') + 1));
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == "non_monotone_timestamps");
    }
  }
  SUBCASE("missing column names the column") {
    try {
      parse_timeseries_csv("timestamp,node_id,inflow_m3s,temp_c,precip_mm\n2024-03-01T00:00:00Z,A,1,2,3\n");
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == "schema_mismatch");
      CHECK(std::string(e.what()).find("demand_m3s") != std::string::npos);
    }
  }
  SUBCASE("bad value and unknown node") {
    CHECK_THROWS_AS(parse_timeseries_csv(kHeader + "2024-03-01T00:00:00Z,A,abc,1,1,1\n"), Error);
    const std::vector<std::string> known{"B"};
    CHECK_THROWS_AS(parse_timeseries_csv(kHeader + hourly_rows("A", 1), &known), Error);
  }
  SUBCASE("missing file") {
    try {
      load_timeseries("/nonexistent/series.csv");
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == "missing_file");
      CHECK(std::string(e.what()).find("/nonexistent/series.csv") != std::string::npos);
    }
  }
}

TEST_CASE("min-max scaling") {
  CHECK(min_max_scale(0.0, 0.0, 10.0) == 0.0);
  CHECK(min_max_scale(10.0, 0.0, 10.0) == 1.0);
  CHECK(min_max_scale(4.0, 4.0, 4.0) == 0.5);
  CHECK(min_max_scale(15.0, 0.0, 10.0) == doctest::Approx(1.5));
  CHECK(season_of_month(12) == 0);
  CHECK(season_of_month(1) == 0);
  CHECK(season_of_month(4) == 1);
  CHECK(season_of_month(7) == 2);
  CHECK(season_of_month(10) == 3);
}

TEST_CASE("gap handling") {
  std::vector<TimeRecord> r(2);
  r[0].timestamp = 0;
  r[0].inflow_m3s = 0.0;
  SUBCASE("2-hour gap is filled linearly") {
    r[1].timestamp = 2 * 3600;
    r[1].inflow_m3s = 10.0;
    const Resampled s = resample(r, 3600, 6.0);
    REQUIRE(s.records.size() == 3);
    CHECK(s.valid[1]);
    CHECK(s.records[1].inflow_m3s == doctest::Approx(5.0));
    CHECK(s.flagged == 0);
  }
  SUBCASE("7-hour gap is flagged") {
    r[1].timestamp = 7 * 3600;
    r[1].inflow_m3s = 10.0;
    const Resampled s = resample(r, 3600, 6.0);
    REQUIRE(s.records.size() == 8);
    CHECK(s.flagged == 6);
    for (int k = 1; k < 7; ++k) CHECK_FALSE(s.valid[static_cast<std::size_t>(k)]);
    CHECK(s.valid[7]);
  }
}

TEST_CASE("preprocessing") {
  PreprocessConfig cfg;
  cfg.smoothing_window = 1;
  cfg.train_fraction = 1.0;
  SUBCASE("two-point series scales to {0, 1}") {
    std::string csv = kHeader + "2024-03-01T00:00:00Z,A,0,10,0,1\n2024-03-01T01:00:00Z,A,10,20,0,3\n";
    PreprocessStats stats;
    const FeatureTable f = preprocess(parse_timeseries_csv(csv), cfg, &stats);
    const auto& rows = f.rows.at("A");
    CHECK(rows[0][0] == 0.0);
    CHECK(rows[1][0] == 1.0);
    CHECK(rows[0][2] == doctest::Approx(-1.0));
    CHECK(rows[1][2] == doctest::Approx(1.0));
    CHECK(rows[1][4] == 1.0);  // hour
    CHECK(rows[0][5] == 4.0);  // Friday
    CHECK(rows[0][6] == 3.0);  // March
    CHECK(rows[0][7] == 1.0);  // spring
    CHECK(stats.columns.at("A").at("inflow").max == 10.0);
  }
  SUBCASE("constant series is degenerate") {
    std::string csv = kHeader;
    for (int h = 0; h < 4; ++h)
      csv += format_iso8601(h * 3600) + ",A,5,10,0,1\n";
    const FeatureTable f = preprocess(parse_timeseries_csv(csv), cfg);
    for (const auto& row : f.rows.at("A")) CHECK(row[0] == 0.5);
    CHECK_FALSE(f.warnings.empty());
  }
  SUBCASE("lags and smoothing") {
    PreprocessConfig c2;
    c2.smoothing_window = 3;
    c2.lag_hours = {1};
    c2.rolling_days = {};
    c2.train_fraction = 1.0;
    const FeatureTable f = preprocess(parse_timeseries_csv(kHeader + hourly_rows("A", 5, 0.0)), c2);
    const auto& rows = f.rows.at("A");
    // Smoothed inflow: 0, 0.5, 1, 2, 3 → min-max over [0, 3].
    CHECK(rows[1][0] == doctest::Approx(0.5 / 3.0));
    CHECK(rows[4][0] == doctest::Approx(1.0));
    CHECK(std::isnan(rows[0][8]));
    CHECK(rows[4][8] == doctest::Approx(rows[3][0]));
  }
  SUBCASE("test split reuses training statistics") {
    PreprocessConfig c3 = cfg;
    c3.train_fraction = 0.5;
    const FeatureTable f = preprocess(parse_timeseries_csv(kHeader + hourly_rows("A", 4, 0.0)), c3);
    CHECK(f.rows.at("A")[3][0] == doctest::Approx(3.0));  // range fitted on {0, 1}
  }
}

TEST_CASE("scenario schedule") {
  Scenario s;
  s.steps = 400;
  CHECK(schedule_events(s, 10).empty());
  ContextEvent d;
  d.t = 100;
  d.duration = 50;
  d.kind = EventKind::kDrought;
  d.severity = 0.5;
  s.events.push_back(d);
  CHECK(schedule_events(s, 99).empty());
  CHECK(schedule_events(s, 100).size() == 1);
  CHECK(schedule_events(s, 149).size() == 1);
  CHECK(schedule_events(s, 150).empty());

  ContextEvent f = d;
  f.t = 120;
  f.kind = EventKind::kFlood;
  f.severity = 0.9;
  s.events.push_back(f);
  const auto both = schedule_events(s, 130);
  CHECK(both.size() == 2);
  CHECK(dominant_event(both)->kind == EventKind::kFlood);
}

TEST_CASE("scenario JSON") {
  const Scenario s = parse_scenario_json(R"({"steps": 48, "seed": 4,
      "keywords": {"dry spell": "drought", "levee": "flood"},
      "events": [{"t": 2, "duration": 5, "severity": 0.4, "text": "A long DRY SPELL ahead"},
                 {"t": 9, "kind": "heatwave", "severity": 0.8, "duration": 2, "region": "row1"}]})");
  CHECK(s.steps == 48);
  CHECK(s.seed == 4);
  REQUIRE(s.events.size() == 2);
  CHECK(s.events[0].kind == EventKind::kDrought);
  CHECK(s.events[1].kind == EventKind::kHeatwave);
  const std::string row1 = "row1";
  CHECK(schedule_events(s, 9, &row1).size() == 1);
  const std::string row0 = "row0";
  CHECK(schedule_events(s, 9, &row0).empty());
  CHECK_THROWS_AS(parse_scenario_json(R"({"steps": 4})"), Error);
  CHECK_THROWS_AS(parse_scenario_json(R"({"steps": 4, "seed": 1, "events": [{"t": 0, "kind": "meteor", "severity": 1}]})"),
                  Error);
  CHECK_THROWS_AS(parse_scenario_json(R"({"steps": 4, "seed": 1, "events": [{"t": 0, "kind": "flood", "severity": 1.5}]})"),
                  Error);
}

TEST_CASE("synthetic drivers") {
  const NetworkTopology t = build_topology(grid_spec({}));
  const DriverSeries a = synthetic_drivers(t, 24, 3);
  const DriverSeries b = synthetic_drivers(t, 24, 3);
  CHECK(a.steps() == 24);
  CHECK(a.inflow == b.inflow);
  a.validate(t.size());

  const Scenario sc = drought_then_flood_scenario(48, 3);
  const DriverSeries e = synthetic_drivers(t, 48, 3, {}, &sc);
  double drought = 0.0, flood = 0.0, calm = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    drought += e.inflow[10][i];
    flood += e.inflow[30][i];
    calm += a.inflow[10][i];
  }
  CHECK(drought < calm);
  CHECK(flood > calm);
}
