#ifndef RFLOCK_UNCERTAINTY_HPP
#define RFLOCK_UNCERTAINTY_HPP

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>

#include "rflock/network.hpp"
#include "rflock/rng.hpp"

namespace rflock {

/// γ_env = clamp(temp_coeff · max(0, T̄ − temp_ref_c) + precip_coeff · P̄, 0, 1)
/// over the endpoint means T̄, P̄. The default temp_coeff puts a 45 °C
/// channel at γ_env = 0.3.
struct EnvLossCoeffs {
  double temp_coeff = 0.02;   // per °C above the reference
  double temp_ref_c = 30.0;
  double precip_coeff = 0.005;  // per mm/h
};

/// γ_human = clamp(demand_coeff · (d_i + d_j) / (2 d_ref), 0, 1).
struct HumanLossCoeffs {
  double demand_coeff = 0.1;
  double demand_ref_m3s = 50.0;
};

struct UncertaintyParams {
  double sigma_base = 0.05;     // transfer noise, as a share of flow_scale
  double sigma_eta = 0.0;       // level noise [m³/s]
  double epsilon_floor = 0.1;   // minimum channel efficiency
  /// Reference flow for the transfer-noise scale [m³/s]; 0 means "scale by
  /// the release itself".
  double flow_scale_m3s = 0.0;
  EnvLossCoeffs env;
  HumanLossCoeffs human;

  void validate() const;
};

template <typename Scalar>
Scalar clamp01(Scalar x) {
  return std::clamp(x, Scalar(0), Scalar(1));
}

double env_loss(const WeatherVector& wi, const WeatherVector& wj,
                const EnvLossCoeffs& coeffs = {});

/// Demand-driven γ_human, or the guidance estimate γ̂_human when one is
/// active.
double human_loss(double demand_i, double demand_j, const HumanLossCoeffs& coeffs = {},
                  std::optional<double> gamma_human_hat = std::nullopt);

/// α = min(1, max(ε, α_nominal · (1 − γ_env − γ_human))).
template <typename Scalar>
Scalar channel_efficiency(Scalar alpha_nominal, Scalar gamma_env, Scalar gamma_human,
                          Scalar epsilon_floor) {
  using std::max;
  using std::min;
  return min(Scalar(1), max(epsilon_floor, alpha_nominal * (Scalar(1) - gamma_env - gamma_human)));
}

struct TransferDraw {
  double flow = 0.0;
  bool clamped = false;  // a negative draw was cut to zero
};

/// f = α · release + ε, ε ~ N(0, (sigma_base · scale)²) with scale =
/// flow_scale_m3s, or the release when flow_scale_m3s == 0.
TransferDraw sample_transfer(double release, double alpha, double sigma_base,
                             CounterRng& rng, double flow_scale_m3s = 0.0);

/**
 * Analytic variance of the terminal level perturbation in a cascade:
 *   Var[h_n] = Σ_{i=1}^{n−1} (Π_{j=i+1}^{n} α_{j,j−1}²) σ_base² + σ_η².
 * `alphas` holds α_{2,1} … α_{n,n−1} (n − 1 entries). Units are the
 * normalized ones of the formula: neither A_i nor Δt enters.
 */
template <typename Scalar>
Scalar predicted_cascade_variance(std::span<const Scalar> alphas, Scalar sigma_base,
                                  Scalar sigma_eta) {
  if (alphas.empty()) throw Error("empty_chain", "cascade needs at least one link");
  // Suffix products, accumulated from the terminal end.
  Scalar sum(0);
  Scalar suffix(1);
  for (std::size_t k = alphas.size(); k-- > 0;) {
    suffix *= alphas[k] * alphas[k];
    sum += suffix;
  }
  return sum * sigma_base * sigma_base + sigma_eta * sigma_eta;
}

/// Π α over the chain.
template <typename Scalar>
Scalar compound_efficiency(std::span<const Scalar> alphas) {
  Scalar p(1);
  for (Scalar a : alphas) p *= a;
  return p;
}

struct MonteCarloVariance {
  double variance = 0.0;  // unbiased sample variance
  double mean = 0.0;
  std::size_t samples = 0;
};

/// Simulates independent per-hop noise: node i (1 ≤ i < n) perturbs its
/// release by N(0, σ_base²); the perturbation travels through links
/// i+1 … n, and the terminal node adds N(0, σ_η²). Requires n_samples ≥ 10⁴.
MonteCarloVariance monte_carlo_cascade_variance(std::span<const double> alphas,
                                                double sigma_base, double sigma_eta,
                                                std::size_t n_samples, CounterRng& rng);

/// Chain form: extracts α_nominal along a linear chain topology.
/// Errors: not_a_chain.
std::vector<double> chain_alphas(const NetworkTopology& topology);

MonteCarloVariance monte_carlo_cascade_variance(const NetworkTopology& chain,
                                                const UncertaintyParams& params,
                                                std::size_t n_samples, CounterRng& rng);

}  // namespace rflock

#endif  // RFLOCK_UNCERTAINTY_HPP
