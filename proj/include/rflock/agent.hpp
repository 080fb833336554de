#ifndef RFLOCK_AGENT_HPP
#define RFLOCK_AGENT_HPP

#include <cstddef>
#include <vector>

#include "rflock/network.hpp"
#include "rflock/nn.hpp"
#include "rflock/rng.hpp"

namespace rflock {

constexpr int kEdgeFeatureDim = 2;  // [α̂_ij, δ_ij]

struct EncoderConfig {
  std::vector<int> gnn_widths{64, 128, 64};
  int lstm_hidden = 128;
  int window = 24;             // K
  int forecast_horizon = 6;    // H

  void validate() const;
  int message_dim() const { return ReservoirState::kDim + kEdgeFeatureDim; }
  int gnn_out() const { return gnn_widths.empty() ? 0 : gnn_widths.back(); }
  int forecast_dim() const { return forecast_horizon * WeatherVector::kDim; }
  int encoded_dim() const {
    return ReservoirState::kDim + gnn_out() + lstm_hidden + forecast_dim();
  }
};

struct PolicyConfig {
  std::vector<int> trunk_widths{256, 256, 128};
  std::vector<int> value_widths{256, 256};  // a final width-1 layer is appended
  int mixer_hidden = 64;
  int mixer_edge_width = 4;  // gradient vectors are padded/truncated to this
  double xi = 0.1;           // injection strength ξ
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double init_log_std = -0.5;
  double init_mean_scale = 0.01;

  void validate() const;
  int mixer_in() const { return 3 * mixer_edge_width; }
};

/// One agent's observation at one step. Everything is already normalized.
struct Observation {
  VectorXd own;                       // s_i(t)
  std::vector<VectorXd> neighbors;    // [s_j(t−τ); e_ij] per neighbor slot
  std::vector<VectorXd> history;      // K own states, oldest first
  VectorXd forecast;                  // H × weather
  VectorXd coord_grads;               // [∇align; ∇sep; ∇coh], padded
};

/// Column-stacked observations of one agent (fixed neighbor count).
struct ObservationBatch {
  MatrixXd own;
  std::vector<MatrixXd> neighbors;
  std::vector<MatrixXd> history;
  MatrixXd forecast;
  MatrixXd coord_grads;

  Eigen::Index size() const { return own.cols(); }
  static ObservationBatch stack(const std::vector<const Observation*>& obs);
};

/// Pads or truncates per-edge gradients of the three losses into the mixer
/// input layout [align(W); sep(W); coh(W)].
VectorXd pack_coordination_gradients(const VectorXd& align, const VectorXd& sep,
                                     const VectorXd& coh, int edge_width);

/// a = a_max (tanh(u) + 1) / 2.
double squash(double u, double a_max);
/// log |da/du| for the squash above.
double log_squash_jacobian(double u, double a_max);

/// Log-density of release a = squash(u) when u ~ N(mean, exp(log_std)²),
/// summed over independent edges (includes the squash correction).
double squashed_log_prob(const VectorXd& u, const VectorXd& mean,
                         const VectorXd& log_std, double a_max);

struct PolicySample {
  VectorXd u;        // pre-squash draw
  VectorXd release;  // [m³/s], in [0, a_max]
  double log_prob = 0.0;
  double value = 0.0;
  VectorXd mean;
  VectorXd log_std;
};

/**
 * Per-agent networks: GNN + LSTM state encoder, policy trunk with
 * coordination-gradient injection before the squashed-Gaussian head, and a
 * value network on the (detached) encoding.
 */
class AgentNetwork {
 public:
  struct EncodeCache {
    std::vector<nn::Mlp<double>::Cache> gnn;  // per neighbor slot
    nn::Lstm<double>::Cache lstm;
    Eigen::Index gnn_rows = 0;
  };
  struct PolicyCache {
    EncodeCache encode;
    MatrixXd encoded;
    nn::Mlp<double>::Cache trunk;
    nn::Mlp<double>::Cache mixer;
    MatrixXd h2;
    MatrixXd log_std_raw;
  };
  struct PolicyOutput {
    MatrixXd mean;
    MatrixXd log_std;
  };

  AgentNetwork() = default;
  AgentNetwork(const EncoderConfig& enc, const PolicyConfig& pol, int action_dim,
               int neighbor_count, CounterRng& init_rng);

  int action_dim() const { return action_dim_; }
  int neighbor_count() const { return neighbor_count_; }
  const EncoderConfig& encoder_config() const { return enc_; }
  const PolicyConfig& policy_config() const { return pol_; }
  void set_xi(double xi) { pol_.xi = xi; }
  /// Disables the injection path entirely (ablation build).
  void set_injection_enabled(bool on) { injection_enabled_ = on; }
  bool injection_enabled() const { return injection_enabled_ && pol_.xi != 0.0; }

  /// s^MARL = [s_i; GNN; LSTM; forecast].
  MatrixXd encode(const ObservationBatch& batch, EncodeCache* cache = nullptr) const;
  /// h1 = trunk(s^MARL); h2 = h1 + ξ · mixer(grads); returns mean and log-std.
  PolicyOutput policy(const MatrixXd& encoded, const MatrixXd& coord_grads,
                      PolicyCache* cache = nullptr) const;
  /// The injected hidden state h2 for given h1 (exposed for tests).
  MatrixXd inject(const MatrixXd& h1, const MatrixXd& coord_grads,
                  nn::Mlp<double>::Cache* cache = nullptr) const;
  MatrixXd trunk_forward(const MatrixXd& encoded) const { return trunk_.forward(encoded); }
  MatrixXd value(const MatrixXd& encoded, nn::Mlp<double>::Cache* cache = nullptr) const;

  /// Reverse pass from ∂J/∂mean and ∂J/∂log_std into the policy parameters.
  void policy_backward(const ObservationBatch& batch, PolicyCache& cache,
                       const MatrixXd& d_mean, const MatrixXd& d_log_std);
  void value_backward(const nn::Mlp<double>::Cache& cache, const MatrixXd& d_value);

  /// Samples (or, deterministically, takes the mean of) the release policy.
  PolicySample act(const Observation& obs, double a_max, CounterRng* rng) const;

  nn::ParamList<double> policy_params();
  nn::ParamList<double> value_params();
  nn::ParamList<double> all_params();

  nn::Mlp<double>& mixer() { return mixer_; }
  nn::Dense<double>& mean_head() { return mean_head_; }
  nn::Mlp<double>& gnn() { return gnn_; }
  nn::Lstm<double>& lstm() { return lstm_; }

 private:
  EncoderConfig enc_;
  PolicyConfig pol_;
  int action_dim_ = 1;
  int neighbor_count_ = 0;
  bool injection_enabled_ = true;

  nn::Mlp<double> gnn_;
  nn::Lstm<double> lstm_;
  nn::Mlp<double> trunk_;
  nn::Mlp<double> mixer_;
  nn::Dense<double> mean_head_;
  nn::Dense<double> log_std_head_;
  nn::Mlp<double> value_;
};

}  // namespace rflock

#endif  // RFLOCK_AGENT_HPP
