#include "rflock/bench.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstring>

namespace rflock {

std::pair<std::size_t, std::size_t> grid_shape(std::size_t nodes) {
  if (nodes == 0) throw Error("invalid_size", "grid needs at least one node");
  auto rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(nodes)));
  while (rows > 1 && nodes % rows != 0) --rows;
  return {rows, nodes / rows};
}

std::optional<double> peak_rss_mb() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return std::nullopt;
  return static_cast<double>(usage.ru_maxrss) / 1024.0;  // Linux reports KiB
}

ScalingReport scaling_benchmark(const std::vector<std::size_t>& sizes, int steps, std::uint64_t seed,
                                const TrainingConfig& config, int warmup_steps) {
  if (steps < 1) throw Error("invalid_config", "benchmark needs at least one timed step");
  ScalingReport report;
  std::vector<double> xs, ys;
  for (std::size_t nodes : sizes) {
    const auto [rows, cols] = grid_shape(nodes);
    GridOptions g;
    g.rows = rows;
    g.cols = cols;
    const NetworkTopology topo = build_topology(grid_spec(g));
    Scenario sc;
    sc.steps = warmup_steps + steps;
    sc.seed = seed;
    DriverSeries drivers = synthetic_drivers(topo, sc.steps, seed);
    ReservoirEnv env(topo, config.env, std::move(drivers), sc);
    const auto agents = build_agents(topo, config.encoder, config.policy, seed);
    std::vector<const AgentNetwork*> ptrs;
    for (const auto& a : agents) ptrs.push_back(&a);

    env.reset(seed, 0);
    std::vector<CounterRng> rngs;
    for (std::size_t i = 0; i < topo.size(); ++i)
      rngs.push_back(make_stream(seed, StreamPurpose::kPolicy, i));
    ActionSet actions;
    actions.releases.resize(topo.size());
    std::uint64_t hash = 1469598103934665603ULL;
    std::vector<double> times;
    for (int s = 0; s < warmup_steps + steps; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < topo.size(); ++i) {
        const PolicySample p = ptrs[i]->act(env.observe(i), topo.node(i).a_max, &rngs[i]);
        actions.releases[i] = p.release;
      }
      env.step(actions);
      const auto t1 = std::chrono::steady_clock::now();
      if (s >= warmup_steps) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      for (const auto& r : actions.releases)
        for (Eigen::Index k = 0; k < r.size(); ++k) {
          std::uint64_t bits;
          std::memcpy(&bits, &r[k], sizeof bits);
          hash = (hash ^ bits) * 1099511628211ULL;
        }
    }
    ScalingRow row;
    row.nodes = topo.size();
    row.rows = rows;
    row.cols = cols;
    row.median_step_ms = median(times);
    row.peak_mem_mb = peak_rss_mb();
    report.rows.push_back(row);
    report.trace_hashes.push_back(hash);
    xs.push_back(static_cast<double>(row.nodes));
    ys.push_back(row.median_step_ms);
  }
  for (std::size_t k = 1; k < report.rows.size(); ++k)
    if (report.rows[k].nodes == 2 * report.rows[k - 1].nodes)
      report.doubling_ratios.push_back(report.rows[k].median_step_ms / report.rows[k - 1].median_step_ms);
  if (xs.size() >= 2) report.slope = log_log_slope(xs, ys);
  return report;
}

void write_scaling_csv(std::ostream& out, const ScalingReport& report) {
  out << "nodes,median_step_ms,peak_mem_mb,slope\n";
  char buf[256];
  for (const auto& r : report.rows) {
    char mem[64];
    if (r.peak_mem_mb) std::snprintf(mem, sizeof mem, "%.3f", *r.peak_mem_mb);
    else std::snprintf(mem, sizeof mem, "unavailable");
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%s,%.6f\n", r.nodes, r.median_step_ms, mem, report.slope);
    out << buf;
  }
}

}  // namespace rflock
