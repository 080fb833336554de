#ifndef RFLOCK_SCENARIO_HPP
#define RFLOCK_SCENARIO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rflock/guidance.hpp"
#include "rflock/network.hpp"

namespace rflock {

struct TimeRecord {
  std::int64_t timestamp = 0;  // seconds since the Unix epoch (UTC)
  double inflow_m3s = 0.0;
  double temp_c = 0.0;
  double precip_mm = 0.0;
  double demand_m3s = 0.0;
};

/// Per-node records with strictly increasing timestamps.
struct TimeSeries {
  std::map<std::string, std::vector<TimeRecord>> nodes;

  std::size_t record_count() const;
};

/// "2024-03-01T05:00:00Z" (the trailing Z and seconds are optional).
/// Errors: bad_timestamp.
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t timestamp);

extern const char* const kTimeSeriesHeader;

/// Errors: missing_file, schema_mismatch (names the column), bad_timestamp,
/// bad_value, non_monotone_timestamps, unknown_node.
TimeSeries parse_timeseries_csv(const std::string& text,
                                const std::vector<std::string>* known_nodes = nullptr);
TimeSeries load_timeseries(const std::string& path,
                           const std::vector<std::string>* known_nodes = nullptr);

struct PreprocessConfig {
  std::int64_t cadence_s = 3600;
  double max_gap_hours = 6.0;        // gaps ≥ this are flagged, never filled
  int smoothing_window = 3;          // trailing moving average, in samples
  std::vector<int> lag_hours{1, 6, 12, 24};
  std::vector<int> rolling_days{7, 30};
  double train_fraction = 0.8;       // leading share used for statistics
};

struct ColumnStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

/// Normalization statistics from the training split, per node and column.
struct PreprocessStats {
  std::map<std::string, std::map<std::string, ColumnStats>> columns;
};

struct FeatureTable {
  std::vector<std::string> column_names;
  std::map<std::string, std::vector<std::int64_t>> timestamps;
  std::map<std::string, std::vector<std::vector<double>>> rows;  // NaN = unavailable
  std::map<std::string, std::vector<bool>> valid;
  bool processed = true;
  std::vector<std::string> warnings;
  std::size_t flagged_records = 0;  // slots inside long gaps
};

/// Resamples to the cadence with linear filling of short gaps, smooths,
/// normalizes (min-max for flows, z-score for weather) and appends calendar
/// indicators, lags and rolling statistics. Statistics come from `stats`
/// when given, else from the leading train_fraction of each node.
FeatureTable preprocess(const TimeSeries& series, const PreprocessConfig& config,
                        PreprocessStats* stats_out = nullptr,
                        const PreprocessStats* stats_in = nullptr);

/// Min-max scaling with the degenerate range mapped to 0.5. Values outside
/// the reference range are not clamped.
double min_max_scale(double x, double lo, double hi);

/// Meteorological season: 0 winter (DJF), 1 spring, 2 summer, 3 autumn.
int season_of_month(int month);

/// Linear fill of gaps shorter than max_gap on a uniform grid. Returns the
/// resampled (timestamp, value) series; slots inside longer gaps hold NaN.
struct Resampled {
  std::vector<std::int64_t> timestamps;
  std::vector<TimeRecord> records;
  std::vector<bool> valid;
  std::size_t flagged = 0;
};
Resampled resample(const std::vector<TimeRecord>& records, std::int64_t cadence_s,
                   double max_gap_hours);

/// Per-step exogenous drivers, indexed [step][node].
struct DriverSeries {
  std::vector<std::vector<double>> inflow;    // q_ext [m³/s]
  std::vector<std::vector<double>> demand;    // [m³/s]
  std::vector<std::vector<WeatherVector>> weather;

  std::size_t steps() const { return inflow.size(); }
  void validate(std::size_t node_count) const;
};

struct SyntheticOptions {
  double base_inflow_m3s = 20.0;
  double inflow_amplitude = 0.3;     // diurnal share
  double base_demand_m3s = 20.0;
  double demand_amplitude = 0.2;
  double base_temp_c = 18.0;
  double temp_amplitude_c = 6.0;
  double storm_rate = 0.0;           // random storm pulses per node per step
  double storm_inflow_m3s = 80.0;
  // Physical footprint of scheduled events.
  double drought_inflow_cut = 0.8;   // share of inflow removed at severity 1
  double drought_temp_rise_c = 12.0;
  double flood_inflow_m3s = 120.0;   // added at severity 1
  double flood_precip_mm = 20.0;
};

struct Scenario {
  std::string topology;  // path, may be empty when the topology is given inline
  int steps = 24;
  std::uint64_t seed = 0;
  double forecast_noise = 0.0;  // std of forecast errors, in normalized units
  std::vector<ContextEvent> events;
  std::map<std::string, std::string> keywords;  // keyword → event kind

  void validate() const;
};

/// Scenario JSON: {"topology", "steps", "seed", "forecast_noise",
/// "keywords": {...}, "events": [{t, kind?, severity, duration, region, text}]}.
/// Events without a kind are tagged by the first keyword found in the text.
/// Errors: malformed_scenario, unknown_event_kind, invalid_event, missing_field.
Scenario parse_scenario_json(const std::string& text);
Scenario load_scenario(const std::string& path);

EventKind classify_text(const std::string& text,
                        const std::map<std::string, std::string>& keywords);

/// Events pending at `step`, optionally restricted to a region.
std::vector<ContextEvent> schedule_events(const Scenario& scenario, int step,
                                          const std::string* region = nullptr);

/// Sinusoidal diurnal inflow/demand/temperature with optional storm pulses;
/// scheduled events imprint drought (less inflow, heat) or flood (inflow and
/// rain pulses) on the nodes of their region.
DriverSeries synthetic_drivers(const NetworkTopology& topology, int steps, std::uint64_t seed,
                               const SyntheticOptions& options = {},
                               const Scenario* scenario = nullptr);

/// Raw (resampled, not normalized) drivers in topology order.
/// Errors: missing_node_series, series_too_short.
DriverSeries drivers_from_timeseries(const TimeSeries& series, const NetworkTopology& topology,
                                     int steps, std::int64_t cadence_s = 3600);

/// Drought-then-flood script used by the guidance ablation.
Scenario drought_then_flood_scenario(int steps, std::uint64_t seed);

}  // namespace rflock

#endif  // RFLOCK_SCENARIO_HPP
