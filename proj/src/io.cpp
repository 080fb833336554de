#include "rflock/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rflock {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const json& doc) { return hex64(fnv1a64(doc.dump())); }

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", std::string("cannot open ") + what + " file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path);
  out << text;
}

namespace {

json weights_json(const CoordinationWeights& w) {
  return {{"align", w.align}, {"sep", w.sep}, {"coh", w.coh}};
}

CoordinationWeights weights_from(const json& j, CoordinationWeights w) {
  w.align = j.value("align", w.align);
  w.sep = j.value("sep", w.sep);
  w.coh = j.value("coh", w.coh);
  return w;
}

}  // namespace

json to_json(const TrainingConfig& c) {
  const EnvConfig& e = c.env;
  return {
      {"episodes", c.episodes},
      {"seed", c.seed},
      {"workers", c.workers},
      {"cv_window", c.cv_window},
      {"encoder",
       {{"gnn_widths", c.encoder.gnn_widths},
        {"lstm_hidden", c.encoder.lstm_hidden},
        {"window", c.encoder.window},
        {"forecast_horizon", c.encoder.forecast_horizon}}},
      {"policy",
       {{"trunk_widths", c.policy.trunk_widths},
        {"value_widths", c.policy.value_widths},
        {"mixer_hidden", c.policy.mixer_hidden},
        {"mixer_edge_width", c.policy.mixer_edge_width},
        {"xi", c.policy.xi},
        {"log_std_min", c.policy.log_std_min},
        {"log_std_max", c.policy.log_std_max},
        {"init_log_std", c.policy.init_log_std},
        {"init_mean_scale", c.policy.init_mean_scale}}},
      {"train",
       {{"lr_policy", c.train.lr_policy},
        {"lr_value", c.train.lr_value},
        {"clip", c.train.clip},
        {"gae_lambda", c.train.gae_lambda},
        {"gamma", c.train.gamma},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"update_every", c.train.update_every},
        {"beta_mur", c.train.beta_mur},
        {"normalize_advantages", c.train.normalize_advantages}}},
      {"env",
       {{"dt_s", e.dt_s},
        {"sigma_base", e.uncertainty.sigma_base},
        {"sigma_eta", e.uncertainty.sigma_eta},
        {"epsilon_floor", e.uncertainty.epsilon_floor},
        {"flow_scale_m3s", e.flow_scale_m3s},
        {"noise_flow_scale_m3s", e.uncertainty.flow_scale_m3s},
        {"beta_d", e.coordination.beta_d},
        {"beta_e", e.coordination.beta_e},
        {"rho_base", e.coordination.rho_base},
        {"lambda_eco", e.coordination.lambda_eco},
        {"cohesion_full_target", e.coordination.cohesion_full_target},
        {"f_eco_m3s", e.f_eco_m3s},
        {"guidance", e.guidance},
        {"static_weights", weights_json(e.static_weights)},
        {"penalty_multiplier", e.penalty_multiplier},
        {"flood_penalty_scale", e.reward.flood_penalty_scale},
        {"op_cost_weight", e.reward.op_cost_weight},
        {"mode_gain", e.reward.mode_gain},
        {"drawdown_margin_m", e.reward.drawdown_margin_m},
        {"emergency_threshold", e.timings.emergency_threshold}}},
  };
}

TrainingConfig training_config_from_json(const json& doc, TrainingConfig c) {
  try {
    c.episodes = doc.value("episodes", c.episodes);
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    c.cv_window = doc.value("cv_window", c.cv_window);
    if (auto it = doc.find("encoder"); it != doc.end()) {
      const json& j = *it;
      c.encoder.gnn_widths = j.value("gnn_widths", c.encoder.gnn_widths);
      c.encoder.lstm_hidden = j.value("lstm_hidden", c.encoder.lstm_hidden);
      c.encoder.window = j.value("window", c.encoder.window);
      c.encoder.forecast_horizon = j.value("forecast_horizon", c.encoder.forecast_horizon);
    }
    if (auto it = doc.find("policy"); it != doc.end()) {
      const json& j = *it;
      c.policy.trunk_widths = j.value("trunk_widths", c.policy.trunk_widths);
      c.policy.value_widths = j.value("value_widths", c.policy.value_widths);
      c.policy.mixer_hidden = j.value("mixer_hidden", c.policy.mixer_hidden);
      c.policy.mixer_edge_width = j.value("mixer_edge_width", c.policy.mixer_edge_width);
      c.policy.xi = j.value("xi", c.policy.xi);
      c.policy.log_std_min = j.value("log_std_min", c.policy.log_std_min);
      c.policy.log_std_max = j.value("log_std_max", c.policy.log_std_max);
      c.policy.init_log_std = j.value("init_log_std", c.policy.init_log_std);
      c.policy.init_mean_scale = j.value("init_mean_scale", c.policy.init_mean_scale);
    }
    if (auto it = doc.find("train"); it != doc.end()) {
      const json& j = *it;
      c.train.lr_policy = j.value("lr_policy", c.train.lr_policy);
      c.train.lr_value = j.value("lr_value", c.train.lr_value);
      c.train.clip = j.value("clip", c.train.clip);
      c.train.gae_lambda = j.value("gae_lambda", c.train.gae_lambda);
      c.train.gamma = j.value("gamma", c.train.gamma);
      c.train.batch_size = j.value("batch_size", c.train.batch_size);
      c.train.epochs = j.value("epochs", c.train.epochs);
      c.train.update_every = j.value("update_every", c.train.update_every);
      c.train.beta_mur = j.value("beta_mur", c.train.beta_mur);
      c.train.normalize_advantages = j.value("normalize_advantages", c.train.normalize_advantages);
    }
    if (auto it = doc.find("env"); it != doc.end()) {
      const json& j = *it;
      EnvConfig& e = c.env;
      e.dt_s = j.value("dt_s", e.dt_s);
      e.uncertainty.sigma_base = j.value("sigma_base", e.uncertainty.sigma_base);
      e.uncertainty.sigma_eta = j.value("sigma_eta", e.uncertainty.sigma_eta);
      e.uncertainty.epsilon_floor = j.value("epsilon_floor", e.uncertainty.epsilon_floor);
      e.uncertainty.flow_scale_m3s = j.value("noise_flow_scale_m3s", e.uncertainty.flow_scale_m3s);
      e.flow_scale_m3s = j.value("flow_scale_m3s", e.flow_scale_m3s);
      e.coordination.beta_d = j.value("beta_d", e.coordination.beta_d);
      e.coordination.beta_e = j.value("beta_e", e.coordination.beta_e);
      e.coordination.rho_base = j.value("rho_base", e.coordination.rho_base);
      e.coordination.lambda_eco = j.value("lambda_eco", e.coordination.lambda_eco);
      e.coordination.cohesion_full_target =
          j.value("cohesion_full_target", e.coordination.cohesion_full_target);
      e.f_eco_m3s = j.value("f_eco_m3s", e.f_eco_m3s);
      e.guidance = j.value("guidance", e.guidance);
      if (j.contains("static_weights")) e.static_weights = weights_from(j.at("static_weights"), e.static_weights);
      e.penalty_multiplier = j.value("penalty_multiplier", e.penalty_multiplier);
      e.reward.flood_penalty_scale = j.value("flood_penalty_scale", e.reward.flood_penalty_scale);
      e.reward.op_cost_weight = j.value("op_cost_weight", e.reward.op_cost_weight);
      e.reward.mode_gain = j.value("mode_gain", e.reward.mode_gain);
      e.reward.drawdown_margin_m = j.value("drawdown_margin_m", e.reward.drawdown_margin_m);
      e.timings.emergency_threshold = j.value("emergency_threshold", e.timings.emergency_threshold);
    }
  } catch (const json::exception& ex) {
    throw Error("invalid_config", std::string("configuration schema error: ") + ex.what());
  }
  // Observation sizes follow the encoder.
  c.env.window = c.encoder.window;
  c.env.forecast_horizon = c.encoder.forecast_horizon;
  c.env.mixer_edge_width = c.policy.mixer_edge_width;
  c.validate();
  return c;
}

void save_checkpoint(const std::string& path, std::vector<AgentNetwork*> agents, const std::string& hash) {
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kVersion;
  doc["config_hash"] = hash;
  json list = json::array();
  for (AgentNetwork* a : agents) {
    json params = json::array();
    for (const auto* p : a->all_params()) {
      std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
      params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()},
                        {"data", data}});
    }
    list.push_back({{"params", params}});
  }
  doc["agents"] = list;
  write_text_file(path, doc.dump());
}

std::string load_checkpoint(const std::string& path, std::vector<AgentNetwork*> agents) {
  json doc;
  try {
    doc = json::parse(read_text_file(path, "checkpoint"));
  } catch (const json::exception& e) {
    throw Error("invalid_checkpoint", std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<int>() != kCheckpointFormat)
      throw Error("invalid_checkpoint", "unsupported checkpoint format");
    const json& list = doc.at("agents");
    if (list.size() != agents.size())
      throw Error("invalid_checkpoint", "checkpoint holds " + std::to_string(list.size()) +
                                            " agents, topology has " + std::to_string(agents.size()));
    for (std::size_t i = 0; i < agents.size(); ++i) {
      auto params = agents[i]->all_params();
      const json& jp = list[i].at("params");
      if (jp.size() != params.size()) throw Error("invalid_checkpoint", "parameter count mismatch");
      for (std::size_t k = 0; k < params.size(); ++k) {
        const json& e = jp[k];
        auto* p = params[k];
        if (e.at("name").get<std::string>() != p->name || e.at("rows").get<Eigen::Index>() != p->value.rows() ||
            e.at("cols").get<Eigen::Index>() != p->value.cols())
          throw Error("invalid_checkpoint", "parameter shape mismatch at " + p->name);
        const auto data = e.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != p->value.size())
          throw Error("invalid_checkpoint", "parameter size mismatch at " + p->name);
        std::copy(data.begin(), data.end(), p->value.data());
      }
    }
    return doc.value("config_hash", std::string());
  } catch (const json::exception& e) {
    throw Error("invalid_checkpoint", std::string("checkpoint schema error: ") + e.what());
  }
}

void write_manifest(const std::string& path, const Manifest& m) {
  json doc = {{"version", m.version},     {"subcommand", m.subcommand}, {"argv", m.argv},
              {"seed", m.seed},           {"config_hash", m.config_hash}, {"outputs", m.outputs}};
  write_text_file(path, doc.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
  try {
    const json doc = json::parse(read_text_file(path, "manifest"));
    Manifest m;
    m.version = doc.at("version").get<std::string>();
    m.subcommand = doc.at("subcommand").get<std::string>();
    m.argv = doc.at("argv").get<std::vector<std::string>>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.outputs = doc.value("outputs", std::vector<std::string>{});
    return m;
  } catch (const json::exception& e) {
    throw Error("invalid_manifest", std::string("manifest schema error: ") + e.what());
  }
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return p;
  return (std::filesystem::path(base) / path).string();
}

TrainingConfig preset_for(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "full") {
    TrainingConfig c;
    c.env.window = c.encoder.window;
    c.env.forecast_horizon = c.encoder.forecast_horizon;
    c.env.mixer_edge_width = c.policy.mixer_edge_width;
    return c;
  }
  throw Error("invalid_config", "unknown preset \"" + name + "\"");
}

}  // namespace

RunSetup load_run_setup(const json& doc, const std::string& base_dir) {
  RunSetup s;
  s.resolved = doc;
  s.config = training_config_from_json(doc, preset_for(doc.value("preset", std::string("desk"))));

  if (!doc.contains("topology")) throw Error("invalid_config", "configuration needs a \"topology\"");
  const json& jt = doc.at("topology");
  std::string topo_text;
  if (jt.is_string()) {
    const std::string path = resolve(base_dir, jt.get<std::string>());
    topo_text = read_text_file(path, "topology");
  } else {
    topo_text = jt.dump();
  }
  s.topology = build_topology(parse_topology_json(topo_text));
  s.resolved["topology"] = json::parse(topo_text);

  if (auto it = doc.find("scenario"); it != doc.end()) {
    std::string text = it->is_string() ? read_text_file(resolve(base_dir, it->get<std::string>()), "scenario")
                                       : it->dump();
    json sj = json::parse(text);
    if (!sj.contains("seed")) sj["seed"] = s.config.seed;
    s.scenario = parse_scenario_json(sj.dump());
    s.resolved["scenario"] = sj;
  } else {
    s.scenario.steps = doc.value("steps", 24);
  }
  if (doc.contains("steps")) s.scenario.steps = doc.at("steps").get<int>();
  s.scenario.seed = s.config.seed;
  s.scenario.validate();

  if (auto it = doc.find("timeseries"); it != doc.end()) {
    std::vector<std::string> ids;
    for (const auto& n : s.topology.nodes()) ids.push_back(n.id);
    const std::string path = resolve(base_dir, it->get<std::string>());
    const TimeSeries ts = load_timeseries(path, &ids);
    s.drivers = drivers_from_timeseries(ts, s.topology, s.scenario.steps);
    s.resolved["timeseries_hash"] = hex64(fnv1a64(read_text_file(path, "time series")));
  } else {
    SyntheticOptions o;
    if (auto jt2 = doc.find("synthetic"); jt2 != doc.end()) {
      const json& j = *jt2;
      o.base_inflow_m3s = j.value("base_inflow_m3s", o.base_inflow_m3s);
      o.inflow_amplitude = j.value("inflow_amplitude", o.inflow_amplitude);
      o.base_demand_m3s = j.value("base_demand_m3s", o.base_demand_m3s);
      o.demand_amplitude = j.value("demand_amplitude", o.demand_amplitude);
      o.base_temp_c = j.value("base_temp_c", o.base_temp_c);
      o.temp_amplitude_c = j.value("temp_amplitude_c", o.temp_amplitude_c);
      o.storm_rate = j.value("storm_rate", o.storm_rate);
      o.storm_inflow_m3s = j.value("storm_inflow_m3s", o.storm_inflow_m3s);
      o.drought_inflow_cut = j.value("drought_inflow_cut", o.drought_inflow_cut);
      o.drought_temp_rise_c = j.value("drought_temp_rise_c", o.drought_temp_rise_c);
      o.flood_inflow_m3s = j.value("flood_inflow_m3s", o.flood_inflow_m3s);
      o.flood_precip_mm = j.value("flood_precip_mm", o.flood_precip_mm);
    }
    s.drivers = synthetic_drivers(s.topology, s.scenario.steps, s.config.seed, o, &s.scenario);
  }
  s.resolved["effective"] = to_json(s.config);
  return s;
}

}  // namespace rflock
