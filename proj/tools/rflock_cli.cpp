// rflock: command-line runner for the reservoir-network controller.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "rflock/bench.hpp"
#include "rflock/io.hpp"
#include "rflock/training.hpp"
#include "rflock/uncertainty.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rflock;

namespace {

struct Invocation {
  std::vector<std::string> argv;  // without --out
  std::string out_dir;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io_error", "cannot create output directory " + dir + ": " + ec.message());
}

std::string out_path(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void finish(const Invocation& inv, const std::string& subcommand, std::uint64_t seed,
            const std::string& hash, std::vector<std::string> outputs) {
  Manifest m;
  m.subcommand = subcommand;
  m.argv = inv.argv;
  m.seed = seed;
  m.config_hash = hash;
  outputs.push_back("manifest.json");
  m.outputs = std::move(outputs);
  write_manifest(out_path(inv.out_dir, "manifest.json"), m);
}

struct LoadedRun {
  RunSetup setup;
  std::string hash;
};

LoadedRun load_run(const std::string& config_path, std::optional<std::uint64_t> seed,
                   std::optional<int> episodes, std::optional<int> workers) {
  json doc;
  try {
    doc = json::parse(read_text_file(config_path, "config"));
  } catch (const json::parse_error& e) {
    throw Error("invalid_config", "config " + config_path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw Error("invalid_config", "config " + config_path + " must be a JSON object");
  if (seed) doc["seed"] = *seed;
  if (!doc.contains("seed")) throw Error("invalid_config", "a seed is required (--seed or \"seed\")");
  if (episodes) doc["episodes"] = *episodes;
  if (workers) doc["workers"] = *workers;
  const std::string base = fs::path(config_path).parent_path().string();
  LoadedRun r{load_run_setup(doc, base), {}};
  // Worker count changes scheduling only, never results.
  json hashed = r.setup.resolved;
  hashed.erase("workers");
  hashed["effective"].erase("workers");
  r.hash = config_hash(hashed);
  return r;
}

ReservoirEnv make_env(const RunSetup& s) {
  return ReservoirEnv(s.topology, s.config.env, s.drivers, s.scenario);
}

void write_trajectory(std::ostream& out, const EpisodeLog& log, const NetworkTopology& topo) {
  out << "step,node,level_m,release_m3s,reward,flood\n";
  for (std::size_t t = 0; t < log.steps(); ++t)
    for (std::size_t i = 0; i < log.agents; ++i)
      out << t << ',' << topo.node(i).id << ',' << fmt(log.level[t][i]) << ',' << fmt(log.release[t][i])
          << ',' << fmt(log.reward[t][i]) << ',' << static_cast<int>(log.flood[t][i]) << '\n';
}

json episode_metrics(const EpisodeLog& log) {
  json m;
  m["steps"] = log.steps();
  m["agents"] = log.agents;
  m["episode_return"] = number_or_null(log.episode_return());
  m["safety_rate"] = safety_rate(log);
  m["flood_steps"] = log.flood_steps();
  try {
    const CoordinationQuality q = coordination_quality(log);
    m["q_c"] = q.q_c;
    m["q_c_bias_bound"] = q.bias_bound;
  } catch (const Error& e) {
    m["q_c"] = nullptr;
    m["q_c_note"] = e.code();
  }
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  if (!log.loss_align.empty()) {
    m["loss_align"] = number_or_null(mean(log.loss_align));
    m["loss_sep"] = number_or_null(mean(log.loss_sep));
    m["loss_coh"] = number_or_null(mean(log.loss_coh));
  }
  return m;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::uint64_t episode = 0;
  bool stochastic = false;
};

void cmd_simulate(const SimulateOpts& o, const Invocation& inv) {
  LoadedRun run = load_run(o.config, o.seed, std::nullopt, std::nullopt);
  const RunSetup& s = run.setup;
  auto agents = build_agents(s.topology, s.config.encoder, s.config.policy, s.config.seed);
  if (!o.checkpoint.empty()) {
    std::vector<AgentNetwork*> ptrs;
    for (auto& a : agents) ptrs.push_back(&a);
    load_checkpoint(o.checkpoint, ptrs);
    run.hash = config_hash(json{{"run", run.hash}, {"checkpoint", hex64(fnv1a64(read_text_file(o.checkpoint, "checkpoint")))}});
  }
  std::vector<const AgentNetwork*> policies;
  for (const auto& a : agents) policies.push_back(&a);
  ReservoirEnv env = make_env(s);
  const Rollout r = run_episode(env, policies, s.config.seed, o.episode, !o.stochastic, false, s.config.train);

  ensure_dir(inv.out_dir);
  std::ofstream traj(out_path(inv.out_dir, "trajectory.csv"));
  write_trajectory(traj, r.log, s.topology);
  json m = episode_metrics(r.log);
  m["directives"] = env.guidance().history().size();
  if (const auto* c = env.guidance().client()) m["fallbacks"] = c->fallbacks();
  write_text_file(out_path(inv.out_dir, "metrics.json"), m.dump(2) + "\n");
  finish(inv, "simulate", s.config.seed, run.hash, {"trajectory.csv", "metrics.json"});
}

// ------------------------------------------------------------------- train

struct TrainOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<int> workers;
  bool quiet = false;
};

void cmd_train(const TrainOpts& o, const Invocation& inv) {
  LoadedRun run = load_run(o.config, o.seed, o.episodes, o.workers);
  const RunSetup& s = run.setup;
  ensure_dir(inv.out_dir);
  std::ofstream log(out_path(inv.out_dir, "train_log.csv"));
  write_train_log_header(log);
  Trainer trainer([&s] { return make_env(s); }, s.config);
  const int every = std::max(1, s.config.episodes / 20);
  trainer.run([&](const EpisodeRecord& r) {
    write_train_log_row(log, r);
    if (!o.quiet && (r.episode % every == 0 || r.episode == s.config.episodes))
      std::fprintf(stderr, "episode %d return %.4f safety %.4f\n", r.episode, r.return_mean, r.safety_rate);
  });
  log.close();

  std::vector<AgentNetwork*> nets;
  for (std::size_t i = 0; i < trainer.agent_count(); ++i) nets.push_back(&trainer.learner(i).net);
  save_checkpoint(out_path(inv.out_dir, "checkpoint.json"), nets, run.hash);

  const Rollout eval = trainer.evaluate(static_cast<std::uint64_t>(s.config.episodes) + 1);
  std::ofstream traj(out_path(inv.out_dir, "trajectory.csv"));
  write_trajectory(traj, eval.log, s.topology);
  json m;
  m["evaluation"] = episode_metrics(eval.log);
  m["episodes"] = s.config.episodes;
  m["updates"] = trainer.updates().size();
  const auto& recs = trainer.log();
  if (!recs.empty()) {
    const auto& last = recs.back();
    m["final_cv"] = last.cv ? json(*last.cv) : json("undefined");
    m["final_return_mean"] = last.return_mean;
  }
  write_text_file(out_path(inv.out_dir, "metrics.json"), m.dump(2) + "\n");
  finish(inv, "train", s.config.seed, run.hash, {"train_log.csv", "checkpoint.json", "trajectory.csv", "metrics.json"});
}

// -------------------------------------------------------------------- eval

EpisodeLog read_trajectory(const std::string& path) {
  std::istringstream in(read_text_file(path, "trajectory"));
  std::string line;
  if (!std::getline(in, line) || line != "step,node,level_m,release_m3s,reward,flood")
    throw Error("schema_mismatch", "trajectory " + path + " has an unexpected header");
  std::map<std::string, std::size_t> node_index;
  std::vector<std::vector<std::array<double, 4>>> rows;  // [step][node]
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw Error("schema_mismatch", "trajectory line " + std::to_string(lineno) + " needs 6 fields");
    try {
      const auto step = static_cast<std::size_t>(std::stoul(f[0]));
      auto [it, inserted] = node_index.try_emplace(f[1], node_index.size());
      if (rows.size() <= step) rows.resize(step + 1);
      auto& r = rows[step];
      if (r.size() <= it->second) r.resize(it->second + 1, {std::nan(""), 0, 0, 0});
      r[it->second] = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])};
    } catch (const std::logic_error&) {
      throw Error("bad_value", "trajectory line " + std::to_string(lineno) + " has a non-numeric field");
    }
  }
  EpisodeLog log;
  log.agents = node_index.size();
  for (const auto& r : rows) {
    if (r.size() != log.agents) throw Error("schema_mismatch", "trajectory has ragged steps");
    std::vector<double> lv, rel, rw;
    std::vector<char> fl;
    for (const auto& c : r) {
      lv.push_back(c[0]);
      rel.push_back(c[1]);
      rw.push_back(c[2]);
      fl.push_back(c[3] != 0.0 ? 1 : 0);
    }
    log.level.push_back(lv);
    log.release.push_back(rel);
    log.reward.push_back(rw);
    log.flood.push_back(fl);
  }
  log.validate();
  return log;
}

void cmd_eval(const std::string& trajectory, const Invocation& inv) {
  const EpisodeLog log = read_trajectory(trajectory);
  const json m = episode_metrics(log);
  std::cout << m.dump(2) << "\n";
  if (!inv.out_dir.empty()) {
    ensure_dir(inv.out_dir);
    write_text_file(out_path(inv.out_dir, "metrics.json"), m.dump(2) + "\n");
    finish(inv, "eval", 0, hex64(fnv1a64(read_text_file(trajectory, "trajectory"))), {"metrics.json"});
  }
}

// ----------------------------------------------------------- bench-scaling

struct BenchOpts {
  std::vector<std::size_t> sizes{100, 200, 400, 800};
  int steps = 20;
  int warmup = 2;
  std::uint64_t seed = 1;
  std::string preset = "desk";
};

void cmd_bench(const BenchOpts& o, const Invocation& inv) {
  TrainingConfig cfg = training_config_from_json(json{{"preset", o.preset}},
                                                 o.preset == "desk" ? desk_preset() : [] {
                                                   TrainingConfig c;
                                                   c.env.window = c.encoder.window;
                                                   c.env.forecast_horizon = c.encoder.forecast_horizon;
                                                   c.env.mixer_edge_width = c.policy.mixer_edge_width;
                                                   return c;
                                                 }());
  const ScalingReport rep = scaling_benchmark(o.sizes, o.steps, o.seed, cfg, o.warmup);
  std::ostringstream csv;
  write_scaling_csv(csv, rep);
  std::cout << csv.str();
  if (inv.out_dir.empty()) return;
  ensure_dir(inv.out_dir);
  write_text_file(out_path(inv.out_dir, "bench_scaling.csv"), csv.str());
  json summary;
  summary["sizes"] = o.sizes;
  summary["steps"] = o.steps;
  summary["slope"] = rep.slope;
  summary["doubling_ratios"] = rep.doubling_ratios;
  std::vector<std::string> hashes;
  for (auto h : rep.trace_hashes) hashes.push_back(hex64(h));
  summary["trace_hashes"] = hashes;
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"nodes", r.nodes},
                    {"grid", {r.rows, r.cols}},
                    {"median_step_ms", r.median_step_ms},
                    {"peak_mem_mb", r.peak_mem_mb ? json(*r.peak_mem_mb) : json("unavailable")}});
  summary["rows"] = rows;
  write_text_file(out_path(inv.out_dir, "bench_summary.json"), summary.dump(2) + "\n");
  finish(inv, "bench-scaling", o.seed,
         config_hash(json{{"sizes", o.sizes}, {"steps", o.steps}, {"warmup", o.warmup}, {"preset", o.preset}}),
         {"bench_scaling.csv", "bench_summary.json"});
}

// ------------------------------------------------------- validate-variance

struct VarianceOpts {
  std::vector<int> chains{10};
  double alpha = 1.0;
  double sigma = 0.05;
  double sigma_eta = 0.0;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
};

void cmd_variance(const VarianceOpts& o, const Invocation& inv) {
  std::ostringstream csv;
  csv << "chain,alpha,sigma_base,sigma_eta,analytic_var,empirical_var,rel_error\n";
  for (int n : o.chains) {
    if (n < 2) throw Error("invalid_config", "--chain must be >= 2");
    const std::vector<double> alphas(static_cast<std::size_t>(n - 1), o.alpha);
    const double analytic = predicted_cascade_variance<double>(alphas, o.sigma, o.sigma_eta);
    CounterRng rng = make_stream(o.seed, StreamPurpose::kMonteCarlo, static_cast<std::uint64_t>(n));
    const MonteCarloVariance mc = monte_carlo_cascade_variance(alphas, o.sigma, o.sigma_eta, o.samples, rng);
    const double rel = analytic > 0.0 ? std::abs(mc.variance - analytic) / analytic : std::abs(mc.variance);
    csv << n << ',' << fmt(o.alpha) << ',' << fmt(o.sigma) << ',' << fmt(o.sigma_eta) << ',' << fmt(analytic)
        << ',' << fmt(mc.variance) << ',' << fmt(rel) << '\n';
  }
  std::cout << csv.str();
  if (inv.out_dir.empty()) return;
  ensure_dir(inv.out_dir);
  write_text_file(out_path(inv.out_dir, "variance.csv"), csv.str());
  finish(inv, "validate-variance", o.seed,
         config_hash(json{{"chains", o.chains}, {"alpha", o.alpha}, {"sigma", o.sigma},
                          {"sigma_eta", o.sigma_eta}, {"samples", o.samples}}),
         {"variance.csv"});
}

// ------------------------------------------------------------------ ingest

struct IngestOpts {
  std::string input;
  std::string stats;
  std::string topology;
  double train_fraction = 0.8;
};

json stats_to_json(const PreprocessStats& s) {
  json j = json::object();
  for (const auto& [node, cols] : s.columns)
    for (const auto& [col, c] : cols)
      j[node][col] = {{"min", c.min}, {"max", c.max}, {"mean", c.mean}, {"std", c.std}};
  return j;
}

PreprocessStats stats_from_json(const json& j) {
  PreprocessStats s;
  try {
    for (const auto& [node, cols] : j.items())
      for (const auto& [col, c] : cols.items())
        s.columns[node][col] = {c.at("min").get<double>(), c.at("max").get<double>(), c.at("mean").get<double>(),
                                c.at("std").get<double>()};
  } catch (const json::exception& e) {
    throw Error("invalid_config", std::string("statistics file schema error: ") + e.what());
  }
  return s;
}

void cmd_ingest(const IngestOpts& o, const Invocation& inv) {
  std::vector<std::string> ids;
  if (!o.topology.empty())
    for (const auto& n : build_topology(load_topology_file(o.topology)).nodes()) ids.push_back(n.id);
  const TimeSeries ts = load_timeseries(o.input, ids.empty() ? nullptr : &ids);
  PreprocessConfig cfg;
  cfg.train_fraction = o.train_fraction;
  PreprocessStats stats;
  std::optional<PreprocessStats> given;
  if (!o.stats.empty()) given = stats_from_json(json::parse(read_text_file(o.stats, "statistics")));
  const FeatureTable ft = preprocess(ts, cfg, &stats, given ? &*given : nullptr);

  ensure_dir(inv.out_dir);
  std::ofstream out(out_path(inv.out_dir, "features.csv"));
  out << "timestamp,node_id";
  for (const auto& c : ft.column_names) out << ',' << c;
  out << ",valid\n";
  for (const auto& [node, rows] : ft.rows) {
    const auto& ts_node = ft.timestamps.at(node);
    const auto& valid = ft.valid.at(node);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out << format_iso8601(ts_node[k]) << ',' << node;
      for (double v : rows[k]) out << ',' << (std::isnan(v) ? std::string() : fmt(v));
      out << ',' << (valid[k] ? 1 : 0) << '\n';
    }
  }
  out.close();
  write_text_file(out_path(inv.out_dir, "stats.json"), stats_to_json(given ? *given : stats).dump(2) + "\n");
  json report = {{"flagged_records", ft.flagged_records}, {"warnings", ft.warnings}, {"nodes", ft.rows.size()}};
  write_text_file(out_path(inv.out_dir, "ingest_report.json"), report.dump(2) + "\n");
  for (const auto& w : ft.warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
  finish(inv, "ingest", 0, hex64(fnv1a64(read_text_file(o.input, "time series"))),
         {"features.csv", "stats.json", "ingest_report.json"});
}

// ------------------------------------------------------------------ driver

int run(std::vector<std::string> args, int depth);

void cmd_replay(const std::string& manifest_path, const std::string& out_dir, int depth) {
  if (depth > 0) throw Error("invalid_config", "a replay manifest cannot itself be a replay");
  const Manifest m = read_manifest(manifest_path);
  if (m.version != kVersion)
    std::cerr << json{{"warning", "manifest written by version " + m.version + ", running " + kVersion}}.dump()
              << "\n";
  std::vector<std::string> args = m.argv;
  args.push_back("--out");
  args.push_back(out_dir);
  const int code = run(args, depth + 1);
  if (code != 0) throw Error("replay_failed", "replayed command exited with code " + std::to_string(code));
  const Manifest again = read_manifest(out_path(out_dir, "manifest.json"));
  if (again.config_hash != m.config_hash)
    throw Error("config_changed", "inputs changed since the manifest was written (hash " + m.config_hash +
                                      " vs " + again.config_hash + ")");
}

void report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
}

int run(std::vector<std::string> args, int depth) {
  CLI::App app{"Decentralized reservoir-network controller"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string out_dir;

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Roll policies through a scenario");
  c_sim->add_option("--config", sim.config, "Run configuration JSON")->required();
  c_sim->add_option("--seed", sim.seed, "Master seed");
  c_sim->add_option("--checkpoint", sim.checkpoint, "Trained checkpoint (default: untrained policies)");
  c_sim->add_option("--episode", sim.episode, "Episode index for the noise streams");
  c_sim->add_flag("--stochastic", sim.stochastic, "Sample actions instead of taking the mean");
  c_sim->add_option("--out", out_dir, "Output directory")->required();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train all agents");
  c_tr->add_option("--config", tr.config, "Run configuration JSON")->required();
  c_tr->add_option("--seed", tr.seed, "Master seed");
  c_tr->add_option("--episodes", tr.episodes, "Episode count")->check(CLI::PositiveNumber);
  c_tr->add_option("--workers", tr.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);
  c_tr->add_flag("--quiet", tr.quiet, "No progress lines");
  c_tr->add_option("--out", out_dir, "Output directory")->required();

  std::string trajectory;
  auto* c_ev = app.add_subcommand("eval", "Metrics over a trajectory CSV");
  c_ev->add_option("--trajectory", trajectory, "trajectory.csv")->required();
  c_ev->add_option("--out", out_dir, "Output directory");

  BenchOpts bench;
  auto* c_b = app.add_subcommand("bench-scaling", "Per-step timing on synthetic grids");
  c_b->add_option("--sizes", bench.sizes, "Node counts")->delimiter(',');
  c_b->add_option("--steps", bench.steps, "Timed steps per size")->check(CLI::PositiveNumber);
  c_b->add_option("--warmup", bench.warmup, "Untimed steps per size");
  c_b->add_option("--seed", bench.seed, "Master seed");
  c_b->add_option("--preset", bench.preset, "Network sizes")->check(CLI::IsMember({"desk", "full"}));
  c_b->add_option("--out", out_dir, "Output directory");

  VarianceOpts var;
  auto* c_v = app.add_subcommand("validate-variance", "Analytic vs Monte-Carlo cascade variance");
  c_v->add_option("--chain", var.chains, "Chain lengths")->delimiter(',');
  c_v->add_option("--alpha", var.alpha, "Channel efficiency")->check(CLI::Range(0.0, 1.0));
  c_v->add_option("--sigma", var.sigma, "Transfer noise std")->check(CLI::NonNegativeNumber);
  c_v->add_option("--sigma-eta", var.sigma_eta, "Level noise std")->check(CLI::NonNegativeNumber);
  c_v->add_option("--samples", var.samples, "Monte-Carlo samples");
  c_v->add_option("--seed", var.seed, "Master seed");
  c_v->add_option("--out", out_dir, "Output directory");

  IngestOpts ing;
  auto* c_in = app.add_subcommand("ingest", "Preprocess a time-series CSV");
  c_in->add_option("--input", ing.input, "CSV with timestamp,node_id,inflow_m3s,temp_c,precip_mm,demand_m3s")
      ->required();
  c_in->add_option("--stats", ing.stats, "Reuse normalization statistics from a previous ingest");
  c_in->add_option("--topology", ing.topology, "Restrict node ids to this topology");
  c_in->add_option("--train-fraction", ing.train_fraction, "Leading share used for statistics")
      ->check(CLI::Range(0.0, 1.0));
  c_in->add_option("--out", out_dir, "Output directory")->required();

  std::string manifest;
  auto* c_rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_rep->add_option("--manifest", manifest, "manifest.json")->required();
  c_rep->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  Invocation inv;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--out") {
      ++k;
      continue;
    }
    if (args[k].rfind("--out=", 0) == 0) continue;
    inv.argv.push_back(args[k]);
  }
  inv.out_dir = out_dir;

  try {
    if (*c_sim) cmd_simulate(sim, inv);
    else if (*c_tr) cmd_train(tr, inv);
    else if (*c_ev) cmd_eval(trajectory, inv);
    else if (*c_b) cmd_bench(bench, inv);
    else if (*c_v) cmd_variance(var, inv);
    else if (*c_in) cmd_ingest(ing, inv);
    else if (*c_rep) cmd_replay(manifest, out_dir, depth);
  } catch (const Error& e) {
    report_error(e.code(), e.what());
    return 2;
  } catch (const json::exception& e) {
    report_error("invalid_config", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args), 0);
}
