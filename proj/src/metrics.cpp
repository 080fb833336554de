#include "rflock/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace rflock {

double EpisodeLog::episode_return() const {
  if (agents == 0) return 0.0;
  double s = 0.0;
  for (const auto& row : reward)
    for (double r : row) s += r;
  return s / static_cast<double>(agents);
}

std::size_t EpisodeLog::flood_steps() const {
  std::size_t n = 0;
  for (const auto& row : flood)
    for (char f : row) n += f != 0;
  return n;
}

void EpisodeLog::validate() const {
  const std::size_t t = reward.size();
  if (release.size() != t || level.size() != t || flood.size() != t)
    throw Error("ragged_log", "episode log series differ in length");
  for (std::size_t k = 0; k < t; ++k)
    if (reward[k].size() != agents || release[k].size() != agents || level[k].size() != agents ||
        flood[k].size() != agents)
      throw Error("ragged_log", "episode log is not rectangular");
}

std::vector<int> quantile_bins(std::span<const double> x, int n_bins) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<int> bins(n, 0);
  std::size_t k = 0;
  while (k < n) {
    std::size_t e = k;
    while (e + 1 < n && x[idx[e + 1]] == x[idx[k]]) ++e;
    // Mid-rank of the tie group decides the bin.
    const double mid = 0.5 * static_cast<double>(k + e);
    const int b = std::min(n_bins - 1, static_cast<int>(mid * n_bins / static_cast<double>(n)));
    for (std::size_t j = k; j <= e; ++j) bins[idx[j]] = b;
    k = e + 1;
  }
  return bins;
}

double mutual_information(std::span<const int> x, std::span<const int> y) {
  if (x.size() != y.size()) throw Error("dimension_mismatch", "label series differ in length");
  const double n = static_cast<double>(x.size());
  std::map<int, double> px, py;
  std::map<std::pair<int, int>, double> pxy;
  for (std::size_t k = 0; k < x.size(); ++k) {
    px[x[k]] += 1.0;
    py[y[k]] += 1.0;
    pxy[{x[k], y[k]}] += 1.0;
  }
  double mi = 0.0;
  for (const auto& [key, c] : pxy)
    mi += c / n * std::log(c * n / (px[key.first] * py[key.second]));
  return std::max(0.0, mi);
}

namespace {

std::size_t occupied(std::span<const int> labels) {
  std::vector<int> v(labels.begin(), labels.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

CoordinationQuality coordination_quality(const MatrixXd& actions, int n_bins) {
  const Eigen::Index steps = actions.rows();
  const Eigen::Index n = actions.cols();
  if (n < 2) throw Error("single_agent", "coordination quality needs at least two agents");
  if (steps < 2 || n_bins < 2) throw Error("too_few_samples", "need >= 2 samples and bins");
  CoordinationQuality out;
  const double log_n = std::log(static_cast<double>(n));
  const VectorXd row_sum = actions.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> own(static_cast<std::size_t>(steps)), others(static_cast<std::size_t>(steps));
    for (Eigen::Index t = 0; t < steps; ++t) {
      own[static_cast<std::size_t>(t)] = actions(t, i);
      others[static_cast<std::size_t>(t)] = (row_sum[t] - actions(t, i)) / static_cast<double>(n - 1);
    }
    const auto bx = quantile_bins(own, n_bins);
    const auto by = quantile_bins(others, n_bins);
    std::vector<int> joint(bx.size());
    for (std::size_t k = 0; k < bx.size(); ++k) joint[k] = bx[k] * n_bins + by[k];
    const double mi = mutual_information(bx, by);
    out.per_agent.push_back(mi / log_n);
    const double kxy = static_cast<double>(occupied(joint));
    const double kx = static_cast<double>(occupied(bx));
    const double ky = static_cast<double>(occupied(by));
    out.bias_bound += std::max(0.0, (kxy - kx - ky + 1.0) / (2.0 * static_cast<double>(steps))) / log_n;
  }
  out.q_c = std::accumulate(out.per_agent.begin(), out.per_agent.end(), 0.0) / static_cast<double>(n);
  out.bias_bound /= static_cast<double>(n);
  return out;
}

CoordinationQuality coordination_quality(const EpisodeLog& log, int n_bins) {
  MatrixXd a(static_cast<Eigen::Index>(log.steps()), static_cast<Eigen::Index>(log.agents));
  for (std::size_t t = 0; t < log.steps(); ++t)
    for (std::size_t i = 0; i < log.agents; ++i)
      a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = log.release[t][i];
  return coordination_quality(a, n_bins);
}

std::optional<double> learning_curve_cv(std::span<const double> returns, std::size_t window) {
  if (window == 0 || returns.empty()) throw Error("empty_window", "CV window is empty");
  if (window > returns.size()) throw Error("window_too_long", "CV window exceeds the series");
  const auto tail = returns.subspan(returns.size() - window);
  double mean = 0.0, max_abs = 0.0;
  for (double r : tail) {
    mean += r;
    max_abs = std::max(max_abs, std::abs(r));
  }
  mean /= static_cast<double>(window);
  double var = 0.0;
  for (double r : tail) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(window));
  if (sd == 0.0) return 0.0;
  if (std::abs(mean) <= 1e-9 * max_abs || mean == 0.0) return std::nullopt;
  return sd / std::abs(mean);
}

double safety_rate(const EpisodeLog& log) {
  const std::size_t total = log.steps() * log.agents;
  if (total == 0) throw Error("empty_log", "safety rate of an empty log");
  return 1.0 - static_cast<double>(log.flood_steps()) / static_cast<double>(total);
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("too_few_samples", "slope needs >= 2 points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(y[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("empty_series", "median of an empty series");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

}  // namespace rflock
