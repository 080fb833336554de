#ifndef RFLOCK_NETWORK_HPP
#define RFLOCK_NETWORK_HPP

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "rflock/rng.hpp"
#include "rflock/types.hpp"

namespace rflock {

/// Local weather at a reservoir.
struct WeatherVector {
  double temp_c = 20.0;     // [°C]
  double precip_mm = 0.0;   // [mm/h], >= 0
  double humidity = 0.5;    // fraction in [0, 1]

  static constexpr int kDim = 3;
  void validate() const;
};

struct ReservoirNode {
  std::string id;
  double surface_area_m2 = 1.0e6;  // A_i [m²]
  double h_min = 0.0;              // [m]
  double h_safe = 8.0;             // flood-risk threshold [m]
  double h_max = 10.0;             // [m]
  double a_max = 100.0;            // max release per outgoing edge [m³/s]
  double flood_weight = 1.0;       // λ_flood
  double op_cost = 0.0;            // c_op per m³/s released
  std::string eco_region;          // membership in P_i
  double initial_level = 5.0;      // [m]
};

struct Channel {
  std::size_t from = 0;
  std::size_t to = 0;
  double alpha_nominal = 1.0;  // (0, 1]
  double distance_km = 0.0;    // δ_ij
  int delay_steps = 0;         // τ in units of Δt
};

/// Description used by build_topology; endpoints are node ids.
struct ChannelSpec {
  std::string from;
  std::string to;
  double alpha_nominal = 1.0;
  double distance_km = 0.0;
  int delay_steps = 0;
};

struct TopologySpec {
  std::vector<ReservoirNode> nodes;
  std::vector<ChannelSpec> edges;
  bool acyclic = false;
};

/**
 * Directed, self-loop-free reservoir graph with precomputed adjacency.
 *
 * Every node owns at least one outlet: its outgoing channels, or a single
 * implicit river-mouth outlet when it has none (a sink).
 */
class NetworkTopology {
 public:
  NetworkTopology() = default;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<ReservoirNode>& nodes() const { return nodes_; }
  const ReservoirNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Channel>& channels() const { return channels_; }
  const Channel& channel(std::size_t c) const { return channels_.at(c); }

  /// Node indices of N_i^up / N_i^down / N_i = N_i^up ∪ N_i^down (sorted).
  const std::vector<std::size_t>& upstream(std::size_t i) const { return up_[i]; }
  const std::vector<std::size_t>& downstream(std::size_t i) const { return down_[i]; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return nbr_[i]; }

  /// Channel indices entering / leaving node i, in edge-list order.
  const std::vector<std::size_t>& in_channels(std::size_t i) const { return in_[i]; }
  const std::vector<std::size_t>& out_channels(std::size_t i) const { return out_[i]; }

  bool is_sink(std::size_t i) const { return out_[i].empty(); }
  std::size_t outlet_count(std::size_t i) const {
    return out_[i].empty() ? 1 : out_[i].size();
  }
  std::size_t max_outlets() const;

  /// Reservoirs sharing node i's ecological region (includes i).
  const std::vector<std::size_t>& region_members(std::size_t i) const {
    return region_[i];
  }

  /// Channel distance between i and neighbor j (either direction).
  double distance(std::size_t i, std::size_t j) const;
  /// Channel connecting i and j in either direction; throws if none.
  std::size_t channel_between(std::size_t i, std::size_t j) const;

  std::size_t index_of(const std::string& id) const;

  friend NetworkTopology build_topology(const TopologySpec& spec);

 private:
  std::vector<ReservoirNode> nodes_;
  std::vector<Channel> channels_;
  std::vector<std::vector<std::size_t>> up_, down_, nbr_, in_, out_, region_;
};

/// Validates a topology description and computes adjacency.
/// Errors: duplicate_node, dangling_endpoint, self_loop, nonpositive_area,
/// invalid_levels, nonpositive_amax, invalid_alpha, invalid_delay, cycle.
NetworkTopology build_topology(const TopologySpec& spec);

/// Topology JSON document: {"nodes": [...], "edges": [...], "defaults": {...},
/// "acyclic": bool} or {"grid": {"rows": R, "cols": C, ...}, "defaults": {...}}.
TopologySpec parse_topology_json(const std::string& text);
TopologySpec load_topology_file(const std::string& path);

struct GridOptions {
  std::size_t rows = 3;
  std::size_t cols = 3;
  ReservoirNode node_template{};
  double alpha_nominal = 0.95;
  double distance_km = 10.0;
  int delay_steps = 0;
  bool region_per_row = true;  // otherwise one region for the whole grid
};

/// Row-major cascade: (r, c) -> (r, c+1) and (r, c) -> (r+1, c).
/// Node ids are "r<row>c<col>".
TopologySpec grid_spec(const GridOptions& options);

struct ReservoirState {
  double h = 0.0;        // [m]
  double q_in = 0.0;     // [m³/s]
  double q_out = 0.0;    // [m³/s]
  WeatherVector weather;
  double demand = 0.0;   // [m³/s]

  static constexpr int kDim = 4 + WeatherVector::kDim;
};

/// Per-node releases, one entry per outlet (see NetworkTopology).
struct ActionSet {
  std::vector<VectorXd> releases;

  static ActionSet zeros(const NetworkTopology& topology);
  double total(std::size_t node) const { return releases[node].sum(); }
};

/// Realized per-channel flows for one step [m³/s].
struct ChannelFlows {
  VectorXd departing;  // leaves the source this step
  VectorXd arriving;   // reaches the target this step
  VectorXd mouth;      // per-node export through the implicit river mouth
};

struct DynamicsResult {
  std::vector<ReservoirState> next;
  VectorXd level_noise;  // η_i draws [m³/s]
};

/**
 * One explicit Euler step of the level dynamics:
 *   h_i' = h_i + dt/A_i · (Σ_up f_ji − Σ_down f_ik − mouth_i + q_ext,i + η_i).
 *
 * `level_noise` holds one stream per node; it is not consumed when
 * sigma_eta == 0. Errors: release outside [0, a_max], dt_s <= 0.
 */
DynamicsResult step_dynamics(const NetworkTopology& topology,
                             std::span<const ReservoirState> states,
                             const ActionSet& actions, const ChannelFlows& flows,
                             std::span<const double> q_ext, double dt_s,
                             double sigma_eta, std::span<CounterRng> level_noise);

/// FIFO of in-flight channel transfers; a flow pushed at step t is returned
/// by the push at step t + delay_steps.
class DelayLine {
 public:
  DelayLine() = default;
  explicit DelayLine(const NetworkTopology& topology);

  /// Enqueue this step's departing flows and return the arriving ones.
  VectorXd push(const VectorXd& departing);
  /// In-flight volume per channel in flow-steps (multiply by dt for m³).
  double in_flight_sum() const;

 private:
  std::vector<std::deque<double>> queues_;
};

struct ViolationReport {
  std::vector<std::size_t> flood_risk;  // h > h_safe
  std::vector<std::size_t> above_max;   // h > h_max
  std::vector<std::size_t> below_min;   // h < h_min

  bool empty() const {
    return flood_risk.empty() && above_max.empty() && below_min.empty();
  }
};

ViolationReport check_constraints(const NetworkTopology& topology,
                                  std::span<const ReservoirState> states);

/// Σ A_i h_i [m³].
double stored_volume(const NetworkTopology& topology,
                     std::span<const ReservoirState> states);

}  // namespace rflock

#endif  // RFLOCK_NETWORK_HPP
