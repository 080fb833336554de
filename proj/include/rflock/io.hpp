#ifndef RFLOCK_IO_HPP
#define RFLOCK_IO_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rflock/training.hpp"

namespace rflock {

constexpr const char* kVersion = "0.1.0";
constexpr int kCheckpointFormat = 1;

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

nlohmann::json to_json(const TrainingConfig& config);
/// Overlays the keys present in `doc` on `base`. Errors: invalid_config.
TrainingConfig training_config_from_json(const nlohmann::json& doc, TrainingConfig base);
/// Hash of the canonical (sorted-key) dump.
std::string config_hash(const nlohmann::json& doc);

/// JSON checkpoint: every parameter tensor of every agent plus the config
/// hash. Doubles are written with round-trip precision.
void save_checkpoint(const std::string& path, std::vector<AgentNetwork*> agents,
                     const std::string& hash);
/// Errors: missing_file, invalid_checkpoint (shape or count mismatch).
std::string load_checkpoint(const std::string& path, std::vector<AgentNetwork*> agents);

struct Manifest {
  std::string version = kVersion;
  std::string subcommand;
  std::vector<std::string> argv;  // without the output directory flag
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

std::string read_text_file(const std::string& path, const char* what);
void write_text_file(const std::string& path, const std::string& text);

/// Fully resolved inputs of a simulate/train run.
struct RunSetup {
  NetworkTopology topology;
  Scenario scenario;
  DriverSeries drivers;
  TrainingConfig config;
  nlohmann::json resolved;  // canonical description used for hashing
};

/**
 * Run configuration JSON:
 *   {"topology": path | {...}, "scenario": path | {...}, "timeseries": path,
 *    "synthetic": {...}, "preset": "desk" | "full", "episodes", "seed",
 *    "workers", "encoder": {...}, "policy": {...}, "train": {...},
 *    "env": {...}}
 * Relative paths resolve against `base_dir`. Without a time series the
 * drivers come from the synthetic generator.
 */
RunSetup load_run_setup(const nlohmann::json& doc, const std::string& base_dir);

}  // namespace rflock

#endif  // RFLOCK_IO_HPP
