#include <doctest.h>

#include <filesystem>

#include "rflock/io.hpp"

using namespace rflock;
using nlohmann::json;

namespace fs = std::filesystem;

TEST_CASE("FNV-1a") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(config_hash(json{{"b", 1}, {"a", 2}}) == config_hash(json{{"a", 2}, {"b", 1}}));
}

TEST_CASE("config JSON round-trip") {
  TrainingConfig c = desk_preset();
  c.train.beta_mur = 0.0;
  c.env.guidance = false;
  c.env.static_weights = {0.2, 0.5, 0.3};
  c.episodes = 17;
  const TrainingConfig back = training_config_from_json(to_json(c), TrainingConfig{});
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(training_config_from_json(json{{"train", {{"clip", 2.0}}}}, desk_preset()), Error);
  CHECK_THROWS_AS(training_config_from_json(json{{"episodes", "many"}}, desk_preset()), Error);
}

TEST_CASE("checkpoint round-trip") {
  const TrainingConfig c = desk_preset();
  const NetworkTopology t = build_topology(grid_spec({}));
  auto a = build_agents(t, c.encoder, c.policy, 1);
  auto b = build_agents(t, c.encoder, c.policy, 2);
  const std::string path = (fs::temp_directory_path() / "rflock_ckpt_test.json").string();
  std::vector<AgentNetwork*> pa, pb;
  for (auto& x : a) pa.push_back(&x);
  for (auto& x : b) pb.push_back(&x);
  save_checkpoint(path, pa, "abc");
  CHECK(load_checkpoint(path, pb) == "abc");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const VectorXd va = nn::flatten_values(a[i].all_params());
    const VectorXd vb = nn::flatten_values(b[i].all_params());
    CHECK((va.array() == vb.array()).all());
  }
  pb.pop_back();
  CHECK_THROWS_AS(load_checkpoint(path, pb), Error);
  fs::remove(path);
}

TEST_CASE("run setup from a config file") {
  const std::string dir = RFLOCK_CONFIG_DIR;
  const json doc = json::parse(read_text_file(dir + "/drought_flood.json", "config"));
  const RunSetup s = load_run_setup(doc, dir);
  CHECK(s.topology.size() == 9);
  CHECK(s.scenario.steps == 48);
  CHECK(s.scenario.events.size() == 3);
  CHECK(s.scenario.events[1].kind == EventKind::kStormApproaching);
  CHECK(s.drivers.steps() == 48);
  CHECK(s.config.encoder.lstm_hidden == desk_preset().encoder.lstm_hidden);

  json missing = doc;
  missing["topology"] = "nowhere.json";
  try {
    load_run_setup(missing, dir);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == "missing_file");
    CHECK(std::string(e.what()).find("nowhere.json") != std::string::npos);
  }
  json bad = doc;
  bad["preset"] = "huge";
  CHECK_THROWS_AS(load_run_setup(bad, dir), Error);
}

TEST_CASE("manifest round-trip") {
  Manifest m;
  m.subcommand = "train";
  m.argv = {"train", "--config", "x.json", "--seed", "3"};
  m.seed = 3;
  m.config_hash = "00ff";
  m.outputs = {"train_log.csv"};
  const std::string path = (fs::temp_directory_path() / "rflock_manifest_test.json").string();
  write_manifest(path, m);
  const Manifest r = read_manifest(path);
  CHECK(r.argv == m.argv);
  CHECK(r.seed == 3);
  CHECK(r.config_hash == "00ff");
  CHECK(r.version == kVersion);
  fs::remove(path);
}
