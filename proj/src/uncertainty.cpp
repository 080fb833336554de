#include "rflock/uncertainty.hpp"

#include <cmath>

namespace rflock {

void UncertaintyParams::validate() const {
  if (!(sigma_base >= 0.0)) throw Error("invalid_uncertainty", "sigma_base must be >= 0");
  if (!(sigma_eta >= 0.0)) throw Error("invalid_uncertainty", "sigma_eta must be >= 0");
  if (!(epsilon_floor > 0.0 && epsilon_floor < 1.0))
    throw Error("invalid_uncertainty", "epsilon_floor must lie in (0, 1)");
  if (!(flow_scale_m3s >= 0.0))
    throw Error("invalid_uncertainty", "flow_scale_m3s must be >= 0");
}

double env_loss(const WeatherVector& wi, const WeatherVector& wj,
                const EnvLossCoeffs& coeffs) {
  const double t_mean = 0.5 * (wi.temp_c + wj.temp_c);
  const double p_mean = 0.5 * (wi.precip_mm + wj.precip_mm);
  return clamp01(coeffs.temp_coeff * std::max(0.0, t_mean - coeffs.temp_ref_c) +
                 coeffs.precip_coeff * p_mean);
}

double human_loss(double demand_i, double demand_j, const HumanLossCoeffs& coeffs,
                  std::optional<double> gamma_human_hat) {
  if (gamma_human_hat) return clamp01(*gamma_human_hat);
  if (!(coeffs.demand_ref_m3s > 0.0))
    throw Error("invalid_uncertainty", "reference demand must be positive");
  return clamp01(coeffs.demand_coeff * (demand_i + demand_j) / (2.0 * coeffs.demand_ref_m3s));
}

TransferDraw sample_transfer(double release, double alpha, double sigma_base,
                             CounterRng& rng, double flow_scale_m3s) {
  if (!(release >= 0.0)) throw Error("negative_release", "release must be nonnegative");
  TransferDraw d;
  d.flow = alpha * release;
  const double scale = flow_scale_m3s > 0.0 ? flow_scale_m3s : release;
  const double sd = sigma_base * scale;
  if (sd > 0.0) d.flow += sd * standard_normal(rng);
  if (d.flow < 0.0) {
    d.flow = 0.0;
    d.clamped = true;
  }
  return d;
}

MonteCarloVariance monte_carlo_cascade_variance(std::span<const double> alphas,
                                                double sigma_base, double sigma_eta,
                                                std::size_t n_samples, CounterRng& rng) {
  if (alphas.empty()) throw Error("empty_chain", "cascade needs at least one link");
  if (n_samples < 10000) throw Error("too_few_samples", "Monte-Carlo needs >= 1e4 samples");

  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    double x = 0.0;
    for (double a : alphas) {
      const double eps = sigma_base > 0.0 ? sigma_base * standard_normal(rng) : 0.0;
      x = a * (x + eps);
    }
    if (sigma_eta > 0.0) x += sigma_eta * standard_normal(rng);
    const double delta = x - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (x - mean);
  }
  return {m2 / static_cast<double>(n_samples - 1), mean, n_samples};
}

std::vector<double> chain_alphas(const NetworkTopology& topology) {
  const std::size_t n = topology.size();
  if (n < 2 || topology.channels().size() != n - 1)
    throw Error("not_a_chain", "topology is not a linear chain");
  std::size_t head = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (topology.upstream(i).size() > 1 || topology.downstream(i).size() > 1)
      throw Error("not_a_chain", "topology is not a linear chain");
    if (topology.upstream(i).empty()) {
      if (head != n) throw Error("not_a_chain", "topology has several heads");
      head = i;
    }
  }
  if (head == n) throw Error("not_a_chain", "topology has no head");

  std::vector<double> alphas;
  std::size_t cur = head;
  while (!topology.out_channels(cur).empty()) {
    const auto& c = topology.channel(topology.out_channels(cur).front());
    alphas.push_back(c.alpha_nominal);
    cur = c.to;
  }
  if (alphas.size() != n - 1) throw Error("not_a_chain", "topology is not connected");
  return alphas;
}

MonteCarloVariance monte_carlo_cascade_variance(const NetworkTopology& chain,
                                                const UncertaintyParams& params,
                                                std::size_t n_samples, CounterRng& rng) {
  const auto alphas = chain_alphas(chain);
  return monte_carlo_cascade_variance(alphas, params.sigma_base, params.sigma_eta,
                                      n_samples, rng);
}

}  // namespace rflock
