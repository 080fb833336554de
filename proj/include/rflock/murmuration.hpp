#ifndef RFLOCK_MURMURATION_HPP
#define RFLOCK_MURMURATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "rflock/network.hpp"
#include "rflock/types.hpp"

namespace rflock {

struct CoordinationParams {
  double beta_d = 0.1;    // distance scaling
  double beta_e = 0.5;    // weather-similarity scaling
  double rho_base = 0.3;  // base separation radius (normalized release units)
  double lambda_eco = 1.0;
  double cv_cap = 3.0;    // CV used when the mean level is ~0
  /// Compare the regional sum against F_eco itself instead of F_eco/|P_i|.
  bool cohesion_full_target = false;

  void validate() const;
};

/// (κ_align, κ_sep, κ_coh) on the probability simplex.
struct CoordinationWeights {
  double align = 0.6;
  double sep = 0.1;
  double coh = 0.3;

  static constexpr double kTolerance = 1e-6;

  double sum() const { return align + sep + coh; }
  bool on_simplex(double tol = kTolerance) const {
    return align >= 0.0 && sep >= 0.0 && coh >= 0.0 && align <= 1.0 && sep <= 1.0 &&
           coh <= 1.0 && std::abs(sum() - 1.0) <= tol;
  }
  void validate(double tol = kTolerance) const {
    if (!on_simplex(tol)) throw Error("weights_off_simplex", "coordination weights off simplex");
  }
  friend bool operator==(const CoordinationWeights&, const CoordinationWeights&) = default;
};

/// A scalar loss and its derivative with respect to the agent's own total
/// release S_i = Σ_k a_{i→k}. Every per-edge partial equals d_total.
template <typename Scalar>
struct LossValue {
  Scalar value{0};
  Scalar d_total{0};
};

struct CoordinationLosses {
  double align = 0.0;
  double sep = 0.0;
  double coh = 0.0;
  double total = 0.0;
  double grad_align = 0.0;  // ∂/∂a_{i→k}, identical for every k
  double grad_sep = 0.0;
  double grad_coh = 0.0;
};

struct NeighborSignal {
  double distance_km = 0.0;
  WeatherVector weather;
};

inline double weather_distance(const WeatherVector& a, const WeatherVector& b) {
  const double dt = a.temp_c - b.temp_c;
  const double dp = a.precip_mm - b.precip_mm;
  const double dh = a.humidity - b.humidity;
  return std::sqrt(dt * dt + dp * dp + dh * dh);
}

/// Softmax over energies −β_d δ_ij − β_e ‖ω_i − ω_j‖₂.
/// Errors: empty_neighbors.
template <typename Scalar = double>
typename eigen_types<Scalar>::Vector coordination_weights(const WeatherVector& self,
                                                          std::span<const NeighborSignal> neighbors,
                                                          const CoordinationParams& params) {
  if (neighbors.empty()) throw Error("empty_neighbors", "coordination weights need a neighbor");
  typename eigen_types<Scalar>::Vector e(static_cast<Eigen::Index>(neighbors.size()));
  for (std::size_t j = 0; j < neighbors.size(); ++j)
    e[static_cast<Eigen::Index>(j)] = Scalar(-params.beta_d * neighbors[j].distance_km -
                                             params.beta_e * weather_distance(self, neighbors[j].weather));
  e.array() -= e.maxCoeff();
  e = e.array().exp();
  return e / e.sum();
}

/// 𝓛 = Σ_j w_j (S_i − ā_ij)² with ā_ij = ½ (S_i + S_j(t−τ)).
template <typename Scalar>
LossValue<Scalar> alignment_loss(Scalar own_total, std::span<const Scalar> neighbor_totals,
                                 std::span<const Scalar> weights) {
  LossValue<Scalar> out;
  for (std::size_t j = 0; j < neighbor_totals.size(); ++j) {
    const Scalar avg = Scalar(0.5) * (own_total + neighbor_totals[j]);
    const Scalar r = own_total - avg;
    out.value += weights[j] * r * r;
    // S_i enters both terms: ∂r/∂S_i = 1 − ½.
    out.d_total += weights[j] * Scalar(2) * r * Scalar(0.5);
  }
  return out;
}

/// ρ_i = ρ_base (1 + CV) with CV = population std / mean of the delayed
/// neighbor levels. When |mean| < 1e-6 · max|h|, CV is replaced by cv_cap.
inline double adaptive_radius(std::span<const double> levels, double rho_base,
                              double cv_cap = 3.0) {
  if (levels.empty()) throw Error("empty_neighbors", "adaptive radius needs a neighbor level");
  const auto n = static_cast<double>(levels.size());
  double mean = 0.0;
  double max_abs = 0.0;
  for (double h : levels) {
    mean += h;
    max_abs = std::max(max_abs, std::abs(h));
  }
  mean /= n;
  if (max_abs == 0.0) return rho_base;
  if (std::abs(mean) < 1e-6 * max_abs) return rho_base * (1.0 + cv_cap);
  double var = 0.0;
  for (double h : levels) var += (h - mean) * (h - mean);
  const double cv = std::sqrt(var / n) / std::abs(mean);
  return rho_base * (1.0 + cv);
}

/// 𝓛 = Σ_j exp(−(S_i − S_j)² / ρ²).
template <typename Scalar>
LossValue<Scalar> separation_loss(Scalar own_total, std::span<const Scalar> neighbor_totals,
                                  Scalar rho) {
  if (!(rho > Scalar(0))) throw Error("invalid_radius", "separation radius must be positive");
  LossValue<Scalar> out;
  const Scalar inv_rho2 = Scalar(1) / (rho * rho);
  for (Scalar s : neighbor_totals) {
    const Scalar x = own_total - s;
    const Scalar k = std::exp(-x * x * inv_rho2);
    out.value += k;
    out.d_total += Scalar(-2) * x * inv_rho2 * k;
  }
  return out;
}

/// 𝓛 = λ (Q − F_eco/|P_i|)², Q = S_i + Σ_{j ∈ P_i \ {i}} q_out,j(t−τ).
/// With full_target the comparison is against F_eco.
template <typename Scalar>
LossValue<Scalar> cohesion_loss(Scalar own_total, std::span<const Scalar> region_others,
                                Scalar f_eco, std::size_t region_size, Scalar lambda_eco,
                                bool full_target = false) {
  if (region_size == 0) throw Error("empty_region", "ecological region must be nonempty");
  Scalar q = own_total;
  for (Scalar v : region_others) q += v;
  const Scalar target = full_target ? f_eco : f_eco / Scalar(region_size);
  const Scalar r = q - target;
  return {lambda_eco * r * r, Scalar(2) * lambda_eco * r};
}

/// κ_align 𝓛_align + κ_sep 𝓛_sep + κ_coh 𝓛_coh. Errors: weights_off_simplex.
template <typename Scalar>
Scalar total_coordination_loss(Scalar align, Scalar sep, Scalar coh,
                               const CoordinationWeights& weights) {
  weights.validate();
  return Scalar(weights.align) * align + Scalar(weights.sep) * sep + Scalar(weights.coh) * coh;
}

inline double total_coordination_loss(const CoordinationLosses& l,
                                      const CoordinationWeights& weights) {
  return total_coordination_loss(l.align, l.sep, l.coh, weights);
}

/**
 * Everything an agent needs to evaluate its coordination losses as a
 * function of its own total release; neighbor quantities are frozen at
 * their delayed values. All flows are in normalized release units.
 */
struct CoordinationContext {
  std::vector<double> weights;          // w_ij, aligned with neighbor_totals
  std::vector<double> neighbor_totals;  // S_j(t−τ)
  double rho = 0.3;
  std::vector<double> region_others;    // q_out,j(t−τ), j ∈ P_i \ {i}
  double f_eco = 0.0;
  std::size_t region_size = 1;
  double lambda_eco = 1.0;
  bool full_target = false;
  CoordinationWeights kappa;
};

inline CoordinationLosses evaluate_coordination(const CoordinationContext& ctx,
                                                double own_total) {
  CoordinationLosses out;
  if (!ctx.neighbor_totals.empty()) {
    auto a = alignment_loss<double>(own_total, ctx.neighbor_totals, ctx.weights);
    auto s = separation_loss<double>(own_total, ctx.neighbor_totals, ctx.rho);
    out.align = a.value;
    out.grad_align = a.d_total;
    out.sep = s.value;
    out.grad_sep = s.d_total;
  }
  auto c = cohesion_loss<double>(own_total, ctx.region_others, ctx.f_eco, ctx.region_size,
                                 ctx.lambda_eco, ctx.full_target);
  out.coh = c.value;
  out.grad_coh = c.d_total;
  out.total = total_coordination_loss(out, ctx.kappa);
  return out;
}

/// d𝓛_total / dS_i for the context's κ.
inline double total_gradient(const CoordinationLosses& l, const CoordinationWeights& k) {
  return k.align * l.grad_align + k.sep * l.grad_sep + k.coh * l.grad_coh;
}

inline void CoordinationParams::validate() const {
  if (!(beta_d >= 0.0 && beta_e >= 0.0))
    throw Error("invalid_coordination", "beta_d and beta_e must be >= 0");
  if (!(rho_base > 0.0)) throw Error("invalid_coordination", "rho_base must be > 0");
  if (!(lambda_eco >= 0.0)) throw Error("invalid_coordination", "lambda_eco must be >= 0");
}

}  // namespace rflock

#endif  // RFLOCK_MURMURATION_HPP
