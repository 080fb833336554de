#ifndef RFLOCK_METRICS_HPP
#define RFLOCK_METRICS_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rflock/types.hpp"

namespace rflock {

/// Rectangular per-step, per-agent record of one episode.
struct EpisodeLog {
  std::size_t agents = 0;
  std::vector<std::vector<double>> release;  // total release [m³/s]
  std::vector<std::vector<double>> reward;
  std::vector<std::vector<double>> level;    // h after the step [m]
  std::vector<std::vector<char>> flood;      // h > h_safe after the step
  std::vector<double> loss_align, loss_sep, loss_coh;  // agent means per step

  std::size_t steps() const { return reward.size(); }
  /// Mean over agents of the undiscounted episode reward.
  double episode_return() const;
  std::size_t flood_steps() const;
  void validate() const;
};

struct CoordinationQuality {
  double q_c = 0.0;
  double bias_bound = 0.0;  // Miller-Madow first-order bias, same normalization
  std::vector<double> per_agent;
};

/// Rank-based equal-frequency bins; tied values share a bin.
std::vector<int> quantile_bins(std::span<const double> x, int n_bins);

/// Plug-in mutual information (nats) between two discrete label series.
double mutual_information(std::span<const int> x, std::span<const int> y);

/// Q_c = (1/n) Σ_i I(a_i; ā_{−i}) / log n, where ā_{−i} is the mean of the
/// other agents' totals at each step and both sides are quantile-binned.
/// `actions` is (steps × agents). Errors: single_agent, too_few_samples.
CoordinationQuality coordination_quality(const MatrixXd& actions, int n_bins = 8);
CoordinationQuality coordination_quality(const EpisodeLog& log, int n_bins = 8);

/// Population std / |mean| over the trailing `window` entries; nullopt when
/// |mean| is negligible. Errors: empty_window.
std::optional<double> learning_curve_cv(std::span<const double> returns, std::size_t window);

/// Share of (step, node) pairs with h ≤ h_safe.
double safety_rate(const EpisodeLog& log);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> v);

}  // namespace rflock

#endif  // RFLOCK_METRICS_HPP
