#include <doctest.h>

#include <vector>

#include "rflock/network.hpp"

using namespace rflock;

namespace {

ReservoirNode make_node(const std::string& id, double area = 1.0e6, double h = 5.0) {
  ReservoirNode n;
  n.id = id;
  n.surface_area_m2 = area;
  n.initial_level = h;
  return n;
}

std::vector<ReservoirState> initial_states(const NetworkTopology& t) {
  std::vector<ReservoirState> s(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) s[i].h = t.node(i).initial_level;
  return s;
}

ChannelFlows no_flows(const NetworkTopology& t) {
  ChannelFlows f;
  f.departing = VectorXd::Zero(static_cast<Eigen::Index>(t.channels().size()));
  f.arriving = f.departing;
  f.mouth = VectorXd::Zero(static_cast<Eigen::Index>(t.size()));
  return f;
}

}  // namespace

TEST_CASE("two nodes, one edge") {
  TopologySpec spec;
  spec.nodes = {make_node("A"), make_node("B")};
  spec.edges = {{"A", "B", 0.95, 5.0, 0}};
  const NetworkTopology t = build_topology(spec);
  REQUIRE(t.size() == 2);
  CHECK(t.downstream(0) == std::vector<std::size_t>{1});
  CHECK(t.upstream(1) == std::vector<std::size_t>{0});
  CHECK(t.upstream(0).empty());
  CHECK(t.is_sink(1));
  CHECK(t.outlet_count(1) == 1);
  CHECK(t.distance(0, 1) == doctest::Approx(5.0));
  CHECK(t.distance(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("topology validation") {
  TopologySpec spec;
  spec.nodes = {make_node("A"), make_node("B")};
  spec.edges = {{"A", "Z", 1.0, 0.0, 0}};
  try {
    build_topology(spec);
    FAIL("dangling endpoint accepted");
  } catch (const Error& e) {
    CHECK(e.code() == "dangling_endpoint");
  }

  spec.edges = {{"A", "A", 1.0, 0.0, 0}};
  CHECK_THROWS_AS(build_topology(spec), Error);

  spec.edges = {{"A", "B", 1.0, 0.0, 0}, {"B", "A", 1.0, 0.0, 0}};
  CHECK_NOTHROW(build_topology(spec));
  spec.acyclic = true;
  try {
    build_topology(spec);
    FAIL("cycle accepted in acyclic mode");
  } catch (const Error& e) {
    CHECK(e.code() == "cycle");
  }

  spec.acyclic = false;
  spec.edges = {{"A", "B", 1.5, 0.0, 0}};
  CHECK_THROWS_AS(build_topology(spec), Error);
  spec.edges = {{"A", "B", 1.0, 0.0, -1}};
  CHECK_THROWS_AS(build_topology(spec), Error);

  spec.edges.clear();
  spec.nodes = {make_node("A"), make_node("A")};
  CHECK_THROWS_AS(build_topology(spec), Error);
  spec.nodes = {make_node("A", 0.0)};
  CHECK_THROWS_AS(build_topology(spec), Error);
}

TEST_CASE("3x3 grid") {
  const NetworkTopology t = build_topology(grid_spec({}));
  CHECK(t.size() == 9);
  CHECK(t.channels().size() == 12);
  const std::size_t center = t.index_of("r1c1");
  CHECK(t.upstream(center).size() == 2);
  CHECK(t.downstream(center).size() == 2);
  CHECK(t.neighbors(center).size() == 4);
  CHECK(t.is_sink(t.index_of("r2c2")));
  CHECK(t.upstream(t.index_of("r0c0")).empty());
  CHECK(t.region_members(center).size() == 3);
}

TEST_CASE("topology JSON") {
  const auto spec = parse_topology_json(R"({"nodes": [{"id": "a"}, {"id": "b", "a_max": 50}],
      "edges": [{"from": "a", "to": "b", "alpha_nominal": 0.9, "delay_steps": 2}],
      "defaults": {"surface_area_m2": 2e6}})");
  const NetworkTopology t = build_topology(spec);
  CHECK(t.node(0).surface_area_m2 == doctest::Approx(2e6));
  CHECK(t.node(1).a_max == doctest::Approx(50.0));
  CHECK(t.channel(0).delay_steps == 2);
  CHECK(t.channel(0).alpha_nominal == doctest::Approx(0.9));

  const NetworkTopology g = build_topology(parse_topology_json(R"({"grid": {"rows": 2, "cols": 4}})"));
  CHECK(g.size() == 8);
  CHECK(g.channels().size() == 10);
}

TEST_CASE("Euler step") {
  TopologySpec spec;
  spec.nodes = {make_node("A", 1000.0, 1.0)};
  const NetworkTopology t = build_topology(spec);
  auto s = initial_states(t);
  ActionSet a = ActionSet::zeros(t);
  std::vector<CounterRng> noise{make_stream(1, StreamPurpose::kLevelNoise, 0)};

  SUBCASE("zero flux keeps the level") {
    const std::vector<double> q{0.0};
    const auto r = step_dynamics(t, s, a, no_flows(t), q, 3600.0, 0.0, noise);
    CHECK(r.next[0].h == 1.0);
  }
  SUBCASE("1 m3/s over 1000 m2 for an hour") {
    const std::vector<double> q{1.0};
    const auto r = step_dynamics(t, s, a, no_flows(t), q, 3600.0, 0.0, noise);
    CHECK(r.next[0].h - 1.0 == doctest::Approx(3.6).epsilon(1e-12));
  }
  SUBCASE("release out of range") {
    a.releases[0][0] = t.node(0).a_max + 1.0;
    const std::vector<double> q{0.0};
    CHECK_THROWS_AS(step_dynamics(t, s, a, no_flows(t), q, 3600.0, 0.0, noise), Error);
  }
}

TEST_CASE("closed lossless loop conserves volume") {
  TopologySpec spec;
  spec.nodes = {make_node("A", 1.0e6, 6.0), make_node("B", 2.0e6, 3.0)};
  spec.edges = {{"A", "B", 1.0, 1.0, 0}, {"B", "A", 1.0, 1.0, 0}};
  const NetworkTopology t = build_topology(spec);
  auto s = initial_states(t);
  const double v0 = stored_volume(t, s);
  std::vector<CounterRng> noise{make_stream(1, StreamPurpose::kLevelNoise, 0),
                                make_stream(1, StreamPurpose::kLevelNoise, 1)};
  const std::vector<double> q{0.0, 0.0};
  for (int k = 0; k < 200; ++k) {
    ActionSet a = ActionSet::zeros(t);
    a.releases[0][0] = 10.0 + (k % 7);
    a.releases[1][0] = 20.0 - (k % 5);
    ChannelFlows f = no_flows(t);
    f.departing << a.releases[0][0], a.releases[1][0];
    f.arriving = f.departing;
    s = step_dynamics(t, s, a, f, q, 600.0, 0.0, noise).next;
  }
  CHECK(std::abs(stored_volume(t, s) - v0) / v0 < 1e-12);
}

TEST_CASE("delay line") {
  TopologySpec spec;
  spec.nodes = {make_node("A"), make_node("B")};
  spec.edges = {{"A", "B", 1.0, 1.0, 2}};
  const NetworkTopology t = build_topology(spec);
  DelayLine line(t);
  VectorXd x(1);
  x << 5.0;
  CHECK(line.push(x)[0] == 0.0);
  x << 7.0;
  CHECK(line.push(x)[0] == 0.0);
  CHECK(line.in_flight_sum() == doctest::Approx(12.0));
  x << 0.0;
  CHECK(line.push(x)[0] == 5.0);
  CHECK(line.push(x)[0] == 7.0);
}

TEST_CASE("constraint report") {
  TopologySpec spec;
  spec.nodes = {make_node("A"), make_node("B")};
  const NetworkTopology t = build_topology(spec);
  auto s = initial_states(t);
  CHECK(check_constraints(t, s).empty());
  s[1].h = t.node(1).h_safe + 0.1;
  auto r = check_constraints(t, s);
  CHECK(r.flood_risk == std::vector<std::size_t>{1});
  CHECK(r.above_max.empty());
  s[1].h = t.node(1).h_safe;
  CHECK(check_constraints(t, s).empty());
  s[0].h = -0.5;
  CHECK(check_constraints(t, s).below_min == std::vector<std::size_t>{0});
}
