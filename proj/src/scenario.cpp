#include "rflock/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "rflock/rng.hpp"

namespace rflock {

using nlohmann::json;

const char* const kTimeSeriesHeader = "timestamp,node_id,inflow_m3s,temp_c,precip_mm,demand_m3s";

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Proleptic Gregorian day count (H. Hinnant's civil calendar algorithms).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month, day;
};

Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", std::string("cannot open ") + what + " file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& s, std::size_t line, const char* column) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw Error("bad_value", "line " + std::to_string(line) + ": column \"" + column +
                                 "\" is not a finite number: \"" + s + "\"");
  return v;
}

bool region_matches(const ContextEvent& e, const ReservoirNode& node) {
  return e.region.empty() || e.region == node.eco_region || e.region == node.id;
}

// Trailing mean and population std over the last `window` valid entries.
void rolling_stats(const std::vector<double>& x, std::size_t i, std::size_t window,
                   double& mean, double& sd) {
  const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t k = lo; k <= i; ++k) {
    if (std::isnan(x[k])) continue;
    s += x[k];
    s2 += x[k] * x[k];
    ++n;
  }
  if (n == 0) {
    mean = sd = kNaN;
    return;
  }
  mean = s / static_cast<double>(n);
  sd = std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - mean * mean));
}

}  // namespace

std::size_t TimeSeries::record_count() const {
  std::size_t n = 0;
  for (const auto& [_, r] : nodes) n += r.size();
  return n;
}

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  const std::string t = trim(text);
  int fields = std::sscanf(t.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed);
  if (fields < 6) {
    s = 0;
    fields = std::sscanf(t.c_str(), "%4d-%2d-%2dT%2d:%2d%n", &y, &mo, &d, &h, &mi, &consumed);
    if (fields < 5) throw Error("bad_timestamp", "not an ISO-8601 timestamp: \"" + text + "\"");
  }
  const std::string rest = t.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z"))
    throw Error("bad_timestamp", "unsupported timestamp suffix: \"" + text + "\"");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
    throw Error("bad_timestamp", "timestamp field out of range: \"" + text + "\"");
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t ts) {
  const std::int64_t days = floor_div(ts, 86400);
  const std::int64_t secs = ts - days * 86400;
  const Civil c = civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(c.year), c.month, c.day, static_cast<long long>(secs / 3600),
                static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60));
  return buf;
}

TimeSeries parse_timeseries_csv(const std::string& text, const std::vector<std::string>* known) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("schema_mismatch", "time series file is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split_csv_line(line);
  const std::vector<std::string> required = split_csv_line(kTimeSeriesHeader);
  std::vector<std::size_t> col(required.size());
  for (std::size_t r = 0; r < required.size(); ++r) {
    auto it = std::find(header.begin(), header.end(), required[r]);
    if (it == header.end())
      throw Error("schema_mismatch", "missing column \"" + required[r] + "\"");
    col[r] = static_cast<std::size_t>(it - header.begin());
  }

  TimeSeries ts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw Error("schema_mismatch", "line " + std::to_string(lineno) + " has " +
                                         std::to_string(f.size()) + " fields, expected " +
                                         std::to_string(header.size()));
    const std::string& node = f[col[1]];
    if (known && std::find(known->begin(), known->end(), node) == known->end())
      throw Error("unknown_node", "line " + std::to_string(lineno) + ": unknown node id \"" + node + "\"");
    TimeRecord r;
    r.timestamp = parse_iso8601(f[col[0]]);
    r.inflow_m3s = parse_number(f[col[2]], lineno, "inflow_m3s");
    r.temp_c = parse_number(f[col[3]], lineno, "temp_c");
    r.precip_mm = parse_number(f[col[4]], lineno, "precip_mm");
    r.demand_m3s = parse_number(f[col[5]], lineno, "demand_m3s");
    auto& series = ts.nodes[node];
    if (!series.empty() && r.timestamp <= series.back().timestamp)
      throw Error("non_monotone_timestamps", "line " + std::to_string(lineno) + ": timestamp " +
                                                 f[col[0]] + " for node \"" + node +
                                                 "\" is not after the previous record");
    series.push_back(r);
  }
  return ts;
}

TimeSeries load_timeseries(const std::string& path, const std::vector<std::string>* known) {
  return parse_timeseries_csv(read_file(path, "time series"), known);
}

double min_max_scale(double x, double lo, double hi) {
  if (!(hi > lo)) return 0.5;
  return (x - lo) / (hi - lo);
}

int season_of_month(int month) { return (month % 12) / 3; }

Resampled resample(const std::vector<TimeRecord>& records, std::int64_t cadence_s,
                   double max_gap_hours) {
  if (cadence_s <= 0) throw Error("invalid_preprocess", "cadence must be positive");
  Resampled out;
  if (records.empty()) return out;
  const std::int64_t t0 = records.front().timestamp;
  const double max_gap_s = max_gap_hours * 3600.0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const TimeRecord& a = records[k];
    out.timestamps.push_back(a.timestamp);
    out.records.push_back(a);
    out.valid.push_back(true);
    if (k + 1 == records.size()) break;
    const TimeRecord& b = records[k + 1];
    const std::int64_t gap = b.timestamp - a.timestamp;
    const bool fill = static_cast<double>(gap) < max_gap_s;
    for (std::int64_t t = a.timestamp + cadence_s; t < b.timestamp; t += cadence_s) {
      const double w = static_cast<double>(t - a.timestamp) / static_cast<double>(gap);
      TimeRecord r;
      r.timestamp = t;
      if (fill) {
        r.inflow_m3s = a.inflow_m3s + w * (b.inflow_m3s - a.inflow_m3s);
        r.temp_c = a.temp_c + w * (b.temp_c - a.temp_c);
        r.precip_mm = a.precip_mm + w * (b.precip_mm - a.precip_mm);
        r.demand_m3s = a.demand_m3s + w * (b.demand_m3s - a.demand_m3s);
      } else {
        r.inflow_m3s = r.temp_c = r.precip_mm = r.demand_m3s = kNaN;
        ++out.flagged;
      }
      out.timestamps.push_back(t);
      out.records.push_back(r);
      out.valid.push_back(fill);
    }
  }
  (void)t0;
  return out;
}

FeatureTable preprocess(const TimeSeries& series, const PreprocessConfig& cfg,
                        PreprocessStats* stats_out, const PreprocessStats* stats_in) {
  if (cfg.smoothing_window < 1) throw Error("invalid_preprocess", "smoothing window must be >= 1");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0))
    throw Error("invalid_preprocess", "train_fraction must lie in (0, 1]");

  FeatureTable table;
  table.column_names = {"inflow", "demand", "temp_z", "precip_z", "hour", "day_of_week", "month",
                        "season"};
  for (int lag : cfg.lag_hours) table.column_names.push_back("inflow_lag" + std::to_string(lag) + "h");
  for (int d : cfg.rolling_days) {
    table.column_names.push_back("inflow_mean" + std::to_string(d) + "d");
    table.column_names.push_back("inflow_std" + std::to_string(d) + "d");
  }
  PreprocessStats stats;

  for (const auto& [node, records] : series.nodes) {
    Resampled rs = resample(records, cfg.cadence_s, cfg.max_gap_hours);
    table.flagged_records += rs.flagged;
    const std::size_t n = rs.records.size();

    // Trailing moving average over valid samples.
    auto smooth = [&](double TimeRecord::*field) {
      std::vector<double> out(n, kNaN);
      for (std::size_t i = 0; i < n; ++i) {
        if (!rs.valid[i]) continue;
        double s = 0.0;
        int c = 0;
        for (std::size_t k = i + 1 >= static_cast<std::size_t>(cfg.smoothing_window)
                                 ? i + 1 - static_cast<std::size_t>(cfg.smoothing_window)
                                 : 0;
             k <= i; ++k)
          if (rs.valid[k]) {
            s += rs.records[k].*field;
            ++c;
          }
        out[i] = s / c;
      }
      return out;
    };
    const std::vector<double> inflow = smooth(&TimeRecord::inflow_m3s);
    const std::vector<double> demand = smooth(&TimeRecord::demand_m3s);
    const std::vector<double> temp = smooth(&TimeRecord::temp_c);
    const std::vector<double> precip = smooth(&TimeRecord::precip_mm);

    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n))));
    auto fit = [&](const std::vector<double>& x) {
      ColumnStats c;
      c.min = std::numeric_limits<double>::infinity();
      c.max = -std::numeric_limits<double>::infinity();
      double s = 0.0, s2 = 0.0;
      std::size_t m = 0;
      for (std::size_t i = 0; i < std::min(n_train, n); ++i) {
        if (std::isnan(x[i])) continue;
        c.min = std::min(c.min, x[i]);
        c.max = std::max(c.max, x[i]);
        s += x[i];
        s2 += x[i] * x[i];
        ++m;
      }
      if (m == 0) return ColumnStats{};
      c.mean = s / static_cast<double>(m);
      c.std = std::sqrt(std::max(0.0, s2 / static_cast<double>(m) - c.mean * c.mean));
      return c;
    };
    auto& node_stats = stats.columns[node];
    if (stats_in) {
      auto it = stats_in->columns.find(node);
      if (it == stats_in->columns.end())
        throw Error("missing_stats", "no normalization statistics for node \"" + node + "\"");
      node_stats = it->second;
    } else {
      node_stats["inflow"] = fit(inflow);
      node_stats["demand"] = fit(demand);
      node_stats["temp"] = fit(temp);
      node_stats["precip"] = fit(precip);
    }
    for (const char* c : {"inflow", "demand"})
      if (!(node_stats.at(c).max > node_stats.at(c).min))
        table.warnings.push_back("node " + node + ": degenerate range for " + c + ", scaled to 0.5");
    for (const char* c : {"temp", "precip"})
      if (!(node_stats.at(c).std > 0.0))
        table.warnings.push_back("node " + node + ": zero variance for " + c + ", z-score set to 0");

    auto mm = [&](double x, const char* c) {
      return std::isnan(x) ? kNaN : min_max_scale(x, node_stats.at(c).min, node_stats.at(c).max);
    };
    auto z = [&](double x, const char* c) {
      const auto& s = node_stats.at(c);
      if (std::isnan(x)) return kNaN;
      return s.std > 0.0 ? (x - s.mean) / s.std : 0.0;
    };

    std::vector<double> inflow_n(n);
    for (std::size_t i = 0; i < n; ++i) inflow_n[i] = mm(inflow[i], "inflow");

    auto& rows = table.rows[node];
    rows.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t ts = rs.timestamps[i];
      const std::int64_t days = floor_div(ts, 86400);
      const Civil c = civil_from_days(days);
      std::vector<double>& row = rows[i];
      row.reserve(table.column_names.size());
      row.push_back(inflow_n[i]);
      row.push_back(mm(demand[i], "demand"));
      row.push_back(z(temp[i], "temp"));
      row.push_back(z(precip[i], "precip"));
      row.push_back(static_cast<double>((ts - days * 86400) / 3600));
      row.push_back(static_cast<double>(((days % 7) + 7 + 3) % 7));  // 0 = Monday
      row.push_back(static_cast<double>(c.month));
      row.push_back(static_cast<double>(season_of_month(static_cast<int>(c.month))));
      for (int lag : cfg.lag_hours) {
        const auto steps = static_cast<std::size_t>(lag * 3600 / cfg.cadence_s);
        row.push_back(i >= steps ? inflow_n[i - steps] : kNaN);
      }
      for (int d : cfg.rolling_days) {
        double mean = 0.0, sd = 0.0;
        rolling_stats(inflow_n, i, static_cast<std::size_t>(d * 86400 / cfg.cadence_s), mean, sd);
        row.push_back(mean);
        row.push_back(sd);
      }
    }
    table.timestamps[node] = rs.timestamps;
    table.valid[node] = rs.valid;
  }
  if (table.flagged_records > 0)
    table.warnings.push_back(std::to_string(table.flagged_records) +
                             " slots inside gaps >= " + std::to_string(cfg.max_gap_hours) +
                             " h flagged invalid");
  if (stats_out) *stats_out = std::move(stats);
  return table;
}

void DriverSeries::validate(std::size_t node_count) const {
  if (demand.size() != inflow.size() || weather.size() != inflow.size())
    throw Error("dimension_mismatch", "driver series lengths differ");
  for (std::size_t t = 0; t < inflow.size(); ++t)
    if (inflow[t].size() != node_count || demand[t].size() != node_count ||
        weather[t].size() != node_count)
      throw Error("dimension_mismatch", "driver series width differs from the topology");
}

void Scenario::validate() const {
  if (steps < 1) throw Error("invalid_scenario", "scenario needs at least one step");
  if (!(forecast_noise >= 0.0)) throw Error("invalid_scenario", "forecast_noise must be >= 0");
  for (const auto& e : events) {
    e.validate();
    if (e.t >= steps) throw Error("invalid_scenario", "event starts after the scenario ends");
  }
}

EventKind classify_text(const std::string& text, const std::map<std::string, std::string>& keywords) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& [kw, kind] : keywords) {
    std::string k = kw;
    std::transform(k.begin(), k.end(), k.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!k.empty() && lower.find(k) != std::string::npos) return parse_event_kind(kind);
  }
  return EventKind::kNone;
}

Scenario parse_scenario_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("malformed_scenario", std::string("scenario is not valid JSON: ") + e.what());
  }
  Scenario s;
  try {
    s.topology = doc.value("topology", std::string());
    s.steps = doc.value("steps", s.steps);
    if (!doc.contains("seed")) throw Error("missing_field", "scenario is missing field \"seed\"");
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.forecast_noise = doc.value("forecast_noise", 0.0);
    if (doc.contains("keywords"))
      for (auto& [k, v] : doc.at("keywords").items()) s.keywords[k] = v.get<std::string>();
    for (const auto& je : doc.value("events", json::array())) {
      ContextEvent e;
      e.t = je.at("t").get<int>();
      e.severity = je.at("severity").get<double>();
      e.duration = je.value("duration", 1);
      e.region = je.value("region", std::string());
      e.text = je.value("text", std::string());
      e.kind = je.contains("kind") ? parse_event_kind(je.at("kind").get<std::string>())
                                   : classify_text(e.text, s.keywords);
      s.events.push_back(e);
    }
  } catch (const json::exception& e) {
    throw Error("malformed_scenario", std::string("scenario schema error: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  return parse_scenario_json(read_file(path, "scenario"));
}

std::vector<ContextEvent> schedule_events(const Scenario& scenario, int step,
                                          const std::string* region) {
  std::vector<ContextEvent> out;
  for (const auto& e : scenario.events)
    if (e.active_at(step) && (!region || e.region.empty() || e.region == *region)) out.push_back(e);
  return out;
}

DriverSeries synthetic_drivers(const NetworkTopology& topology, int steps, std::uint64_t seed,
                               const SyntheticOptions& o, const Scenario* scenario) {
  const std::size_t n = topology.size();
  DriverSeries d;
  d.inflow.assign(static_cast<std::size_t>(steps), std::vector<double>(n));
  d.demand.assign(static_cast<std::size_t>(steps), std::vector<double>(n));
  d.weather.assign(static_cast<std::size_t>(steps), std::vector<WeatherVector>(n));
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = make_stream(seed, StreamPurpose::kSynthetic, i);
    const double phase = kTwoPi * uniform01(rng);
    double storm = 0.0;
    for (int t = 0; t < steps; ++t) {
      const double day = kTwoPi * static_cast<double>(t % 24) / 24.0;
      if (o.storm_rate > 0.0 && uniform01(rng) < o.storm_rate) storm += o.storm_inflow_m3s;
      double inflow = o.base_inflow_m3s * (1.0 + o.inflow_amplitude * std::sin(day + phase)) + storm;
      double demand = o.base_demand_m3s * (1.0 + o.demand_amplitude * std::sin(day - kTwoPi / 4.0));
      WeatherVector w;
      w.temp_c = o.base_temp_c + o.temp_amplitude_c * std::sin(day - kTwoPi / 3.0);
      w.precip_mm = storm > 0.0 ? storm / o.storm_inflow_m3s * 5.0 : 0.0;
      w.humidity = 0.5;
      storm *= 0.7;
      if (storm < 1e-3) storm = 0.0;

      if (scenario) {
        for (const auto& e : scenario->events) {
          if (!e.active_at(t) || !region_matches(e, topology.node(i))) continue;
          if (is_flood_like(e.kind)) {
            inflow += o.flood_inflow_m3s * e.severity;
            w.precip_mm += o.flood_precip_mm * e.severity;
            w.humidity = std::min(1.0, w.humidity + 0.4 * e.severity);
          } else if (e.kind == EventKind::kDrought || e.kind == EventKind::kHeatwave) {
            inflow *= 1.0 - o.drought_inflow_cut * e.severity;
            w.temp_c += o.drought_temp_rise_c * e.severity;
            w.humidity = std::max(0.0, w.humidity - 0.3 * e.severity);
            demand *= 1.0 + 0.3 * e.severity;
          }
        }
      }
      const auto ts = static_cast<std::size_t>(t);
      d.inflow[ts][i] = std::max(0.0, inflow);
      d.demand[ts][i] = std::max(0.0, demand);
      d.weather[ts][i] = w;
    }
  }
  return d;
}

DriverSeries drivers_from_timeseries(const TimeSeries& series, const NetworkTopology& topology,
                                     int steps, std::int64_t cadence_s) {
  const std::size_t n = topology.size();
  DriverSeries d;
  d.inflow.assign(static_cast<std::size_t>(steps), std::vector<double>(n));
  d.demand.assign(static_cast<std::size_t>(steps), std::vector<double>(n));
  d.weather.assign(static_cast<std::size_t>(steps), std::vector<WeatherVector>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = topology.node(i).id;
    auto it = series.nodes.find(id);
    if (it == series.nodes.end())
      throw Error("missing_node_series", "time series has no records for node \"" + id + "\"");
    const Resampled rs = resample(it->second, cadence_s, 6.0);
    if (rs.records.size() < static_cast<std::size_t>(steps))
      throw Error("series_too_short", "time series for node \"" + id + "\" is shorter than the run");
    TimeRecord last = rs.records.front();
    for (int t = 0; t < steps; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      // Unfillable slots hold the last valid record.
      if (rs.valid[ts]) last = rs.records[ts];
      d.inflow[ts][i] = std::max(0.0, last.inflow_m3s);
      d.demand[ts][i] = std::max(0.0, last.demand_m3s);
      d.weather[ts][i].temp_c = last.temp_c;
      d.weather[ts][i].precip_mm = std::max(0.0, last.precip_mm);
    }
  }
  return d;
}

Scenario drought_then_flood_scenario(int steps, std::uint64_t seed) {
  Scenario s;
  s.steps = steps;
  s.seed = seed;
  auto at = [&](double frac) { return static_cast<int>(std::lround(frac * steps)); };
  s.events.push_back({at(1.0 / 12), EventKind::kDrought, 0.6, at(1.0 / 3), "", "drought restrictions"});
  s.events.push_back({at(11.0 / 24), EventKind::kStormApproaching, 0.5, at(1.0 / 8), "",
                      "atmospheric river forecast"});
  s.events.push_back({at(7.0 / 12), EventKind::kFlood, 0.9, at(7.0 / 24), "", "flash flood warning"});
  s.validate();
  return s;
}

}  // namespace rflock
