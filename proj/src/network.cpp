#include "rflock/network.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace rflock {

using nlohmann::json;

void WeatherVector::validate() const {
  if (!(humidity >= 0.0 && humidity <= 1.0))
    throw Error("invalid_weather", "humidity must lie in [0, 1]");
  if (!(precip_mm >= 0.0))
    throw Error("invalid_weather", "precipitation must be nonnegative");
}

std::size_t NetworkTopology::max_outlets() const {
  std::size_t m = 1;
  for (std::size_t i = 0; i < size(); ++i) m = std::max(m, outlet_count(i));
  return m;
}

std::size_t NetworkTopology::channel_between(std::size_t i, std::size_t j) const {
  for (std::size_t c : out_[i])
    if (channels_[c].to == j) return c;
  for (std::size_t c : in_[i])
    if (channels_[c].from == j) return c;
  throw Error("not_adjacent", "nodes " + nodes_[i].id + " and " + nodes_[j].id +
                                  " share no channel");
}

double NetworkTopology::distance(std::size_t i, std::size_t j) const {
  return channels_[channel_between(i, j)].distance_km;
}

std::size_t NetworkTopology::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  throw Error("unknown_node", "unknown node id \"" + id + "\"");
}

namespace {

bool has_cycle(std::size_t n, const std::vector<std::vector<std::size_t>>& down) {
  // Kahn's algorithm.
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& d : down)
    for (std::size_t k : d) ++indeg[k];
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  std::size_t seen = 0;
  while (!ready.empty()) {
    std::size_t i = ready.back();
    ready.pop_back();
    ++seen;
    for (std::size_t k : down[i])
      if (--indeg[k] == 0) ready.push_back(k);
  }
  return seen != n;
}

}  // namespace

NetworkTopology build_topology(const TopologySpec& spec) {
  NetworkTopology t;
  std::map<std::string, std::size_t> index;
  for (const auto& node : spec.nodes) {
    if (!index.emplace(node.id, t.nodes_.size()).second)
      throw Error("duplicate_node", "duplicate node id \"" + node.id + "\"");
    if (!(node.surface_area_m2 > 0.0))
      throw Error("nonpositive_area", "node \"" + node.id + "\" has nonpositive area");
    if (!(node.h_min < node.h_safe && node.h_safe <= node.h_max))
      throw Error("invalid_levels",
                  "node \"" + node.id + "\" violates h_min < h_safe <= h_max");
    if (!(node.a_max > 0.0))
      throw Error("nonpositive_amax", "node \"" + node.id + "\" has nonpositive a_max");
    t.nodes_.push_back(node);
  }
  const std::size_t n = t.nodes_.size();
  t.up_.assign(n, {});
  t.down_.assign(n, {});
  t.in_.assign(n, {});
  t.out_.assign(n, {});

  for (const auto& e : spec.edges) {
    auto f = index.find(e.from);
    auto g = index.find(e.to);
    if (f == index.end() || g == index.end()) {
      const std::string& bad = f == index.end() ? e.from : e.to;
      throw Error("dangling_endpoint", "dangling endpoint \"" + bad + "\"");
    }
    if (f->second == g->second)
      throw Error("self_loop", "self-loop on node \"" + e.from + "\"");
    if (!(e.alpha_nominal > 0.0 && e.alpha_nominal <= 1.0))
      throw Error("invalid_alpha", "alpha_nominal must lie in (0, 1]");
    if (e.delay_steps < 0)
      throw Error("invalid_delay", "delay_steps must be nonnegative");
    Channel c{f->second, g->second, e.alpha_nominal, e.distance_km, e.delay_steps};
    const std::size_t ci = t.channels_.size();
    t.channels_.push_back(c);
    t.out_[c.from].push_back(ci);
    t.in_[c.to].push_back(ci);
    t.down_[c.from].push_back(c.to);
    t.up_[c.to].push_back(c.from);
  }

  t.nbr_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (auto* v : {&t.up_[i], &t.down_[i]}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    auto& nb = t.nbr_[i];
    std::set_union(t.up_[i].begin(), t.up_[i].end(), t.down_[i].begin(),
                   t.down_[i].end(), std::back_inserter(nb));
  }

  if (spec.acyclic && has_cycle(n, t.down_))
    throw Error("cycle", "topology declared acyclic contains a cycle");

  t.region_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (t.nodes_[j].eco_region == t.nodes_[i].eco_region) t.region_[i].push_back(j);
  return t;
}

namespace {

ReservoirNode node_from_json(const json& j, const ReservoirNode& defaults) {
  ReservoirNode n = defaults;
  n.id = j.at("id").get<std::string>();
  n.surface_area_m2 = j.value("surface_area_m2", n.surface_area_m2);
  n.h_min = j.value("h_min", n.h_min);
  n.h_safe = j.value("h_safe", n.h_safe);
  n.h_max = j.value("h_max", n.h_max);
  n.a_max = j.value("a_max", n.a_max);
  n.flood_weight = j.value("flood_weight", n.flood_weight);
  n.op_cost = j.value("op_cost", n.op_cost);
  n.eco_region = j.value("eco_region", n.eco_region);
  n.initial_level = j.value("initial_level", n.initial_level);
  return n;
}

ReservoirNode defaults_from_json(const json& j) {
  ReservoirNode d;
  if (!j.is_object()) return d;
  json tmp = j;
  tmp["id"] = "";
  return node_from_json(tmp, d);
}

}  // namespace

TopologySpec parse_topology_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("invalid_topology", std::string("malformed topology JSON: ") + e.what());
  }
  const json defaults_json = doc.value("defaults", json::object());
  const ReservoirNode defaults = defaults_from_json(defaults_json);

  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    GridOptions opt;
    opt.rows = g.value("rows", opt.rows);
    opt.cols = g.value("cols", opt.cols);
    opt.node_template = defaults;
    opt.alpha_nominal = g.value("alpha_nominal", defaults_json.value("alpha_nominal", opt.alpha_nominal));
    opt.distance_km = g.value("distance_km", defaults_json.value("distance_km", opt.distance_km));
    opt.delay_steps = g.value("delay_steps", defaults_json.value("delay_steps", opt.delay_steps));
    opt.region_per_row = g.value("region_per_row", opt.region_per_row);
    return grid_spec(opt);
  }

  TopologySpec spec;
  spec.acyclic = doc.value("acyclic", false);
  try {
    for (const auto& jn : doc.at("nodes")) spec.nodes.push_back(node_from_json(jn, defaults));
    for (const auto& je : doc.at("edges")) {
      ChannelSpec c;
      c.from = je.at("from").get<std::string>();
      c.to = je.at("to").get<std::string>();
      c.alpha_nominal = je.value("alpha_nominal", defaults_json.value("alpha_nominal", 1.0));
      c.distance_km = je.value("distance_km", defaults_json.value("distance_km", 0.0));
      c.delay_steps = je.value("delay_steps", defaults_json.value("delay_steps", 0));
      spec.edges.push_back(c);
    }
  } catch (const json::exception& e) {
    throw Error("invalid_topology", std::string("topology schema error: ") + e.what());
  }
  return spec;
}

TopologySpec load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", "cannot open topology file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology_json(ss.str());
}

TopologySpec grid_spec(const GridOptions& options) {
  TopologySpec spec;
  auto id = [](std::size_t r, std::size_t c) {
    return "r" + std::to_string(r) + "c" + std::to_string(c);
  };
  for (std::size_t r = 0; r < options.rows; ++r) {
    for (std::size_t c = 0; c < options.cols; ++c) {
      ReservoirNode n = options.node_template;
      n.id = id(r, c);
      n.eco_region = options.region_per_row ? "row" + std::to_string(r) : "all";
      spec.nodes.push_back(n);
    }
  }
  for (std::size_t r = 0; r < options.rows; ++r) {
    for (std::size_t c = 0; c < options.cols; ++c) {
      if (c + 1 < options.cols)
        spec.edges.push_back({id(r, c), id(r, c + 1), options.alpha_nominal,
                              options.distance_km, options.delay_steps});
      if (r + 1 < options.rows)
        spec.edges.push_back({id(r, c), id(r + 1, c), options.alpha_nominal,
                              options.distance_km, options.delay_steps});
    }
  }
  spec.acyclic = true;
  return spec;
}

ActionSet ActionSet::zeros(const NetworkTopology& topology) {
  ActionSet a;
  a.releases.reserve(topology.size());
  for (std::size_t i = 0; i < topology.size(); ++i)
    a.releases.push_back(VectorXd::Zero(static_cast<Eigen::Index>(topology.outlet_count(i))));
  return a;
}

DynamicsResult step_dynamics(const NetworkTopology& topology,
                             std::span<const ReservoirState> states,
                             const ActionSet& actions, const ChannelFlows& flows,
                             std::span<const double> q_ext, double dt_s,
                             double sigma_eta, std::span<CounterRng> level_noise) {
  const std::size_t n = topology.size();
  if (!(dt_s > 0.0)) throw Error("invalid_dt", "dt_s must be positive");
  if (states.size() != n || q_ext.size() != n || actions.releases.size() != n)
    throw Error("dimension_mismatch", "per-node inputs must match the topology size");

  DynamicsResult out;
  out.next.assign(states.begin(), states.end());
  out.level_noise = VectorXd::Zero(static_cast<Eigen::Index>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = actions.releases[i];
    const double a_max = topology.node(i).a_max;
    if (static_cast<std::size_t>(r.size()) != topology.outlet_count(i))
      throw Error("dimension_mismatch", "release vector size mismatch at " + topology.node(i).id);
    for (Eigen::Index k = 0; k < r.size(); ++k)
      if (!(r[k] >= 0.0 && r[k] <= a_max))
        throw Error("release_out_of_range",
                    "release at " + topology.node(i).id + " outside [0, a_max]");
  }

  for (std::size_t i = 0; i < n; ++i) {
    double inflow = 0.0;
    for (std::size_t c : topology.in_channels(i)) inflow += flows.arriving[static_cast<Eigen::Index>(c)];
    double outflow = 0.0;
    for (std::size_t c : topology.out_channels(i)) outflow += flows.departing[static_cast<Eigen::Index>(c)];
    if (flows.mouth.size() > 0) outflow += flows.mouth[static_cast<Eigen::Index>(i)];

    double eta = 0.0;
    if (sigma_eta > 0.0) eta = sigma_eta * standard_normal(level_noise[i]);
    out.level_noise[static_cast<Eigen::Index>(i)] = eta;

    auto& s = out.next[i];
    s.h = states[i].h + dt_s / topology.node(i).surface_area_m2 *
                            (inflow - outflow + q_ext[i] + eta);
    s.q_in = inflow;
    s.q_out = actions.total(i);
  }
  return out;
}

DelayLine::DelayLine(const NetworkTopology& topology) {
  queues_.resize(topology.channels().size());
  for (std::size_t c = 0; c < queues_.size(); ++c)
    queues_[c].assign(static_cast<std::size_t>(topology.channel(c).delay_steps), 0.0);
}

VectorXd DelayLine::push(const VectorXd& departing) {
  VectorXd arriving(static_cast<Eigen::Index>(queues_.size()));
  for (std::size_t c = 0; c < queues_.size(); ++c) {
    auto& q = queues_[c];
    q.push_back(departing[static_cast<Eigen::Index>(c)]);
    arriving[static_cast<Eigen::Index>(c)] = q.front();
    q.pop_front();
  }
  return arriving;
}

double DelayLine::in_flight_sum() const {
  double s = 0.0;
  for (const auto& q : queues_)
    for (double v : q) s += v;
  return s;
}

ViolationReport check_constraints(const NetworkTopology& topology,
                                  std::span<const ReservoirState> states) {
  ViolationReport report;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& node = topology.node(i);
    const double h = states[i].h;
    if (h > node.h_safe) report.flood_risk.push_back(i);
    if (h > node.h_max) report.above_max.push_back(i);
    if (h < node.h_min) report.below_min.push_back(i);
  }
  return report;
}

double stored_volume(const NetworkTopology& topology,
                     std::span<const ReservoirState> states) {
  double v = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i)
    v += topology.node(i).surface_area_m2 * states[i].h;
  return v;
}

}  // namespace rflock
