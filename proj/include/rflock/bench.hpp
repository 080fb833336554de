#ifndef RFLOCK_BENCH_HPP
#define RFLOCK_BENCH_HPP

#include <cstdint>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "rflock/training.hpp"

namespace rflock {

struct ScalingRow {
  std::size_t nodes = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double median_step_ms = 0.0;
  std::optional<double> peak_mem_mb;  // process peak RSS so far
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  std::vector<double> doubling_ratios;  // t(n_{k+1}) / t(n_k) when n doubles
  double slope = 0.0;                   // d log t / d log n
  std::vector<std::uint64_t> trace_hashes;  // per size, over all releases
};

/// Most nearly square rows × cols factorization of n (rows ≤ cols).
std::pair<std::size_t, std::size_t> grid_shape(std::size_t nodes);

std::optional<double> peak_rss_mb();

/// Times untrained decision loops (observe, act, step for every agent) on
/// synthetic grids. Single-threaded.
ScalingReport scaling_benchmark(const std::vector<std::size_t>& sizes, int steps, std::uint64_t seed,
                                const TrainingConfig& config, int warmup_steps = 2);

/// CSV `nodes,median_step_ms,peak_mem_mb,slope`.
void write_scaling_csv(std::ostream& out, const ScalingReport& report);

}  // namespace rflock

#endif  // RFLOCK_BENCH_HPP
