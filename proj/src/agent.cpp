#include "rflock/agent.hpp"

#include <cmath>
#include <numbers>

namespace rflock {

void EncoderConfig::validate() const {
  if (window < 1) throw Error("invalid_encoder", "history window K must be >= 1");
  if (forecast_horizon < 0) throw Error("invalid_encoder", "forecast horizon H must be >= 0");
  if (lstm_hidden < 1) throw Error("invalid_encoder", "LSTM hidden size must be >= 1");
  for (int w : gnn_widths)
    if (w < 1) throw Error("invalid_encoder", "GNN widths must be positive");
}

void PolicyConfig::validate() const {
  if (trunk_widths.empty()) throw Error("invalid_policy", "policy trunk needs a layer");
  if (!(xi >= 0.0)) throw Error("invalid_policy", "xi must be >= 0");
  if (!(log_std_min < log_std_max)) throw Error("invalid_policy", "empty log-std range");
  if (!(init_log_std > log_std_min && init_log_std < log_std_max))
    throw Error("invalid_policy", "initial log-std outside its range");
  if (mixer_edge_width < 1 || mixer_hidden < 1)
    throw Error("invalid_policy", "mixer sizes must be positive");
}

ObservationBatch ObservationBatch::stack(const std::vector<const Observation*>& obs) {
  ObservationBatch b;
  const auto n = static_cast<Eigen::Index>(obs.size());
  const Observation& first = *obs.front();
  b.own.resize(first.own.size(), n);
  b.forecast.resize(first.forecast.size(), n);
  b.coord_grads.resize(first.coord_grads.size(), n);
  b.neighbors.assign(first.neighbors.size(), MatrixXd(ReservoirState::kDim + kEdgeFeatureDim, n));
  b.history.assign(first.history.size(), MatrixXd(ReservoirState::kDim, n));
  for (Eigen::Index c = 0; c < n; ++c) {
    const Observation& o = *obs[static_cast<std::size_t>(c)];
    b.own.col(c) = o.own;
    b.forecast.col(c) = o.forecast;
    b.coord_grads.col(c) = o.coord_grads;
    for (std::size_t j = 0; j < o.neighbors.size(); ++j) b.neighbors[j].col(c) = o.neighbors[j];
    for (std::size_t k = 0; k < o.history.size(); ++k) b.history[k].col(c) = o.history[k];
  }
  return b;
}

VectorXd pack_coordination_gradients(const VectorXd& align, const VectorXd& sep,
                                     const VectorXd& coh, int edge_width) {
  VectorXd out = VectorXd::Zero(3 * edge_width);
  const VectorXd* parts[3] = {&align, &sep, &coh};
  for (int p = 0; p < 3; ++p) {
    const Eigen::Index n = std::min<Eigen::Index>(parts[p]->size(), edge_width);
    out.segment(p * edge_width, n) = parts[p]->head(n);
  }
  return out;
}

double squash(double u, double a_max) { return 0.5 * a_max * (std::tanh(u) + 1.0); }

double log_squash_jacobian(double u, double a_max) {
  // log(a_max/2 · (1 − tanh²u)), with 1 − tanh²u = 4 e^{−2|u|} / (1 + e^{−2|u|})².
  const double au = std::abs(u);
  return std::log(0.5 * a_max) + 2.0 * (std::numbers::ln2 - au - std::log1p(std::exp(-2.0 * au)));
}

double squashed_log_prob(const VectorXd& u, const VectorXd& mean, const VectorXd& log_std,
                         double a_max) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double z = (u[k] - mean[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - 0.5 * std::log(2.0 * std::numbers::pi) -
          log_squash_jacobian(u[k], a_max);
  }
  return lp;
}

AgentNetwork::AgentNetwork(const EncoderConfig& enc, const PolicyConfig& pol, int action_dim,
                           int neighbor_count, CounterRng& rng)
    : enc_(enc), pol_(pol), action_dim_(action_dim), neighbor_count_(neighbor_count) {
  enc_.validate();
  pol_.validate();
  if (!enc_.gnn_widths.empty())
    gnn_ = nn::Mlp<double>("gnn", enc_.message_dim(), enc_.gnn_widths, false);
  lstm_ = nn::Lstm<double>("lstm", ReservoirState::kDim, enc_.lstm_hidden);
  trunk_ = nn::Mlp<double>("trunk", enc_.encoded_dim(), pol_.trunk_widths, true);
  const int hidden = pol_.trunk_widths.back();
  mixer_ = nn::Mlp<double>("mixer", pol_.mixer_in(), {pol_.mixer_hidden, hidden}, false);
  mean_head_ = nn::Dense<double>("mean", hidden, action_dim);
  log_std_head_ = nn::Dense<double>("log_std", hidden, action_dim);
  std::vector<int> vw = pol_.value_widths;
  vw.push_back(1);
  value_ = nn::Mlp<double>("value", enc_.encoded_dim(), vw, false);

  if (!gnn_.empty()) gnn_.init(rng);
  lstm_.init(rng);
  trunk_.init(rng);
  mixer_.init(rng);
  mean_head_.init(rng);
  mean_head_.weight().value *= pol_.init_mean_scale;
  mean_head_.bias().value.setZero();
  log_std_head_.weight().value.setZero();
  const double frac = (pol_.init_log_std - pol_.log_std_min) / (pol_.log_std_max - pol_.log_std_min);
  log_std_head_.bias().value.setConstant(std::log(frac / (1.0 - frac)));
  value_.init(rng);
}

MatrixXd AgentNetwork::encode(const ObservationBatch& batch, EncodeCache* cache) const {
  const Eigen::Index b = batch.size();
  const int g = enc_.gnn_out();
  MatrixXd out(enc_.encoded_dim(), b);
  Eigen::Index row = 0;
  out.middleRows(row, ReservoirState::kDim) = batch.own;
  row += ReservoirState::kDim;

  if (g > 0) {
    MatrixXd agg = MatrixXd::Zero(g, b);
    if (cache) cache->gnn.assign(batch.neighbors.size(), {});
    for (std::size_t j = 0; j < batch.neighbors.size(); ++j)
      agg += gnn_.forward(batch.neighbors[j], cache ? &cache->gnn[j] : nullptr);
    if (!batch.neighbors.empty()) agg /= static_cast<double>(batch.neighbors.size());
    out.middleRows(row, g) = agg;
    row += g;
  }

  out.middleRows(row, enc_.lstm_hidden) = lstm_.forward(batch.history, cache ? &cache->lstm : nullptr);
  row += enc_.lstm_hidden;
  if (enc_.forecast_dim() > 0) out.middleRows(row, enc_.forecast_dim()) = batch.forecast;
  return out;
}

MatrixXd AgentNetwork::inject(const MatrixXd& h1, const MatrixXd& coord_grads,
                              nn::Mlp<double>::Cache* cache) const {
  if (!injection_enabled()) return h1;
  return h1 + pol_.xi * mixer_.forward(coord_grads, cache);
}

AgentNetwork::PolicyOutput AgentNetwork::policy(const MatrixXd& encoded,
                                                const MatrixXd& coord_grads,
                                                PolicyCache* cache) const {
  MatrixXd h1 = trunk_.forward(encoded, cache ? &cache->trunk : nullptr);
  MatrixXd h2 = inject(h1, coord_grads, cache ? &cache->mixer : nullptr);
  PolicyOutput out;
  out.mean = mean_head_.forward(h2);
  MatrixXd raw = log_std_head_.forward(h2);
  const double lo = pol_.log_std_min;
  const double span = pol_.log_std_max - pol_.log_std_min;
  out.log_std = raw.unaryExpr([&](double x) { return lo + span * nn::sigmoid(x); });
  if (cache) {
    cache->encoded = encoded;
    cache->h2 = std::move(h2);
    cache->log_std_raw = std::move(raw);
  }
  return out;
}

MatrixXd AgentNetwork::value(const MatrixXd& encoded, nn::Mlp<double>::Cache* cache) const {
  return value_.forward(encoded, cache);
}

void AgentNetwork::policy_backward(const ObservationBatch& batch, PolicyCache& cache,
                                   const MatrixXd& d_mean, const MatrixXd& d_log_std) {
  (void)batch;
  const double span = pol_.log_std_max - pol_.log_std_min;
  MatrixXd d_raw = d_log_std.binaryExpr(cache.log_std_raw, [&](double g, double x) {
    const double s = nn::sigmoid(x);
    return g * span * s * (1.0 - s);
  });
  MatrixXd dh2 = mean_head_.backward(cache.h2, d_mean);
  dh2 += log_std_head_.backward(cache.h2, d_raw);
  if (injection_enabled()) mixer_.backward(cache.mixer, pol_.xi * dh2);
  MatrixXd d_enc = trunk_.backward(cache.trunk, dh2);

  Eigen::Index row = ReservoirState::kDim;
  const int g = enc_.gnn_out();
  if (g > 0) {
    if (!cache.encode.gnn.empty()) {
      const MatrixXd d_msg = d_enc.middleRows(row, g) / static_cast<double>(cache.encode.gnn.size());
      for (auto& c : cache.encode.gnn) gnn_.backward(c, d_msg);
    }
    row += g;
  }
  lstm_.backward(cache.encode.lstm, d_enc.middleRows(row, enc_.lstm_hidden));
}

void AgentNetwork::value_backward(const nn::Mlp<double>::Cache& cache, const MatrixXd& d_value) {
  value_.backward(cache, d_value);
}

PolicySample AgentNetwork::act(const Observation& obs, double a_max, CounterRng* rng) const {
  const ObservationBatch batch = ObservationBatch::stack({&obs});
  const MatrixXd enc = encode(batch);
  const PolicyOutput p = policy(enc, batch.coord_grads);
  PolicySample s;
  s.mean = p.mean.col(0);
  s.log_std = p.log_std.col(0);
  s.u = s.mean;
  if (rng)
    for (Eigen::Index k = 0; k < s.u.size(); ++k)
      s.u[k] += std::exp(s.log_std[k]) * standard_normal(*rng);
  s.release.resize(s.u.size());
  for (Eigen::Index k = 0; k < s.u.size(); ++k) s.release[k] = squash(s.u[k], a_max);
  s.log_prob = squashed_log_prob(s.u, s.mean, s.log_std, a_max);
  s.value = value(enc)(0, 0);
  return s;
}

nn::ParamList<double> AgentNetwork::policy_params() {
  nn::ParamList<double> out;
  if (!gnn_.empty()) gnn_.collect(out);
  lstm_.collect(out);
  trunk_.collect(out);
  mixer_.collect(out);
  mean_head_.collect(out);
  log_std_head_.collect(out);
  return out;
}

nn::ParamList<double> AgentNetwork::value_params() {
  nn::ParamList<double> out;
  value_.collect(out);
  return out;
}

nn::ParamList<double> AgentNetwork::all_params() {
  auto out = policy_params();
  auto v = value_params();
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace rflock
