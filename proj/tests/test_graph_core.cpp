// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "swapsim/graph.hpp"
#include "swapsim/graph_io.hpp"
#include "swapsim/oracles/random_graphs.hpp"
#include "test_util.hpp"

using namespace swapsim;
using namespace swapsim::testing;

namespace {

// Random forward graph plus extra control edges, some of which may close a
// cycle when `allow_back` is set.
GraphSpec random_dag(std::mt19937_64& rng, bool allow_back) {
  auto g = oracles::random_forward_graph(rng);
  const auto order = topo_order(g);
  std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
  for (int k = 0; k < 3; ++k) {
    auto a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (!allow_back && a > b) std::swap(a, b);
    g.control_edges.push_back({order[a], order[b]});
  }
  std::sort(g.control_edges.begin(), g.control_edges.end());
  g.control_edges.erase(std::unique(g.control_edges.begin(), g.control_edges.end()), g.control_edges.end());
  return g;
}

std::vector<std::pair<std::string, std::string>> all_edges(const GraphSpec& g) {
  std::map<std::string, std::string> producer;
  for (const auto& t : g.tensors) producer[t.id] = t.producer;
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& n : g.nodes) {
    for (const auto& in : n.inputs) edges.emplace_back(producer.at(in), n.id);
  }
  for (const auto& e : g.control_edges) edges.emplace_back(e.from, e.to);
  return edges;
}

}  // namespace

TEST_CASE("validate_graph") {
  SUBCASE("well-formed chain") { CHECK(validate_graph(chain_of({"a", "b", "c"})).empty()); }
  SUBCASE("edge c->a closes a cycle") {
    auto g = chain_of({"a", "b", "c"});
    g.nodes[0].inputs.push_back(out("c"));
    auto r = validate_graph(g);
    REQUIRE(r.size() == 1);
    CHECK(r[0].kind == kCycle);
  }
  SUBCASE("dangling tensor") {
    auto g = chain_of({"a", "b"});
    g.nodes[1].inputs.push_back("ghost");
    auto r = validate_graph(g);
    REQUIRE(r.size() == 1);
    CHECK(r[0].kind == kDanglingTensor);
    CHECK(r[0].detail.find("ghost") != std::string::npos);
  }
  SUBCASE("duplicate id and negative size") {
    auto g = chain_of({"a", "b"});
    g.nodes.push_back(g.nodes[1]);
    g.tensors[0].shape = {-2};
    auto r = validate_graph(g);
    CHECK(has_kind(r, kDuplicateId));
    CHECK(has_kind(r, kNegativeSize));
  }
  SUBCASE("negative cost") {
    auto g = chain_of({"a", "b"});
    g.nodes[1].cost_units = -1;
    CHECK(has_kind(validate_graph(g), kNegativeCost));
  }
  SUBCASE("control edge to an unknown node") {
    auto g = chain_of({"a", "b"});
    g.control_edges.push_back({"a", "nowhere"});
    CHECK(has_kind(validate_graph(g), kUnknownNode));
  }
  SUBCASE("input is left unmodified") {
    auto g = chain_of({"a", "b", "c"});
    g.nodes[0].inputs.push_back(out("c"));
    auto copy = g;
    validate_graph(g);
    CHECK(g == copy);
  }
}

TEST_CASE("topo_order") {
  CHECK(topo_order(chain_of({"a", "b", "c"})) == std::vector<std::string>{"a", "b", "c"});
  CHECK(topo_order(GraphSpec{}).empty());

  GraphSpec diamond;
  add_op(diamond, "a", {});
  add_op(diamond, "c", {out("a")});
  add_op(diamond, "b", {out("a")});
  add_op(diamond, "d", {out("b"), out("c")});
  CHECK(topo_order(diamond) == std::vector<std::string>{"a", "b", "c", "d"});

  auto cyclic = chain_of({"a", "b", "c"});
  cyclic.control_edges.push_back({"c", "a"});
  CHECK_THROWS_WITH_AS(topo_order(cyclic), doctest::Contains("cycle"), GraphError);
}

TEST_CASE("bfs_depths") {
  auto d = bfs_depths(chain_of({"a", "b", "c"}));
  CHECK(d == std::map<std::string, int>{{"a", 0}, {"b", 1}, {"c", 2}});

  GraphSpec u;
  add_op(u, "a", {});
  add_op(u, "b", {out("a")});
  add_op(u, "c", {out("b")});
  add_op(u, "d", {out("c")});
  add_op(u, "z", {out("d"), out("a")});
  CHECK(bfs_depths(u).at("z") == 1);
}

TEST_CASE("tensor_bytes") {
  TensorDesc t;
  t.shape = {192, 192, 192};
  t.channels = 4;
  CHECK(tensor_bytes(t) == 113'246'208u);
  t.shape = {1, 1, 1};
  t.channels = 1;
  CHECK(tensor_bytes(t) == 4u);
  t.shape = {128, 128, 128};
  CHECK(tensor_bytes(t) == 8'388'608u);
  t.shape = {1 << 30, 1 << 30, 1 << 30};
  CHECK_THROWS_WITH_AS(tensor_bytes(t), doctest::Contains("overflow"), GraphError);
  t.shape = {0};
  CHECK_THROWS_AS(tensor_bytes(t), GraphError);
}

TEST_CASE("scope matching") {
  CHECK(scope_matches("analysis/*", "analysis/l2/conv1"));
  CHECK(scope_matches("synthesis/*", "synthesis/l0/concat"));
  CHECK_FALSE(scope_matches("synthesis/*", "analysis/l0/conv0"));
  CHECK(scope_matches("analysis/l?/conv0", "analysis/l3/conv0"));
  CHECK(scope_matches_any({"x/*", "bottleneck/*"}, "bottleneck/conv0"));
}

TEST_CASE("graph_io") {
  const auto g = chain_of({"a", "b", "c"});
  SUBCASE("round trip") {
    CHECK(canonicalize(parse_graph(serialize_graph(g))) == canonicalize(g));
  }
  SUBCASE("save is idempotent") {
    const auto text = serialize_graph(g);
    CHECK(serialize_graph(parse_graph(text)) == text);
  }
  SUBCASE("control edges survive") {
    auto h = g;
    h.control_edges.push_back({"a", "c"});
    auto back = parse_graph(serialize_graph(h));
    REQUIRE(back.control_edges.size() == 1);
    CHECK(back.control_edges[0] == ControlEdge{"a", "c"});
  }
  SUBCASE("unknown node kind is named") {
    auto doc = graph_to_json(g);
    doc["nodes"][0]["kind"] = "teleport";
    CHECK_THROWS_WITH_AS(graph_from_json(doc), doctest::Contains("teleport"), GraphError);
  }
  SUBCASE("version mismatch") {
    auto doc = graph_to_json(g);
    doc["version"] = 99;
    CHECK_THROWS_WITH_AS(graph_from_json(doc), doctest::Contains("version"), GraphError);
  }
  SUBCASE("syntax errors carry a position") {
    CHECK_THROWS_WITH_AS(parse_graph("{\n  \"version\": 1,\n  oops\n}"), doctest::Contains("line 3"), GraphError);
  }
  SUBCASE("files") {
    auto path = std::filesystem::temp_directory_path() / "swapsim_graph_io_test.json";
    save_graph(g, path);
    CHECK(canonicalize(load_graph(path)) == canonicalize(g));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_graph(path), GraphError);
  }
}

TEST_CASE("graph properties on random DAGs") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto g = random_dag(rng, false);
    const auto order = topo_order(g);
    std::map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
    REQUIRE(pos.size() == g.nodes.size());
    const auto depth = bfs_depths(g);
    for (const auto& [u, v] : all_edges(g)) {
      CHECK(pos.at(u) < pos.at(v));
      CHECK(depth.at(v) <= depth.at(u) + 1);
    }
    for (const auto& n : g.nodes) {
      if (n.inputs.empty()) CHECK(depth.at(n.id) == 0);
    }
    CHECK(canonicalize(parse_graph(serialize_graph(g))) == canonicalize(g));
  }
}

TEST_CASE("validate_graph is empty iff topo_order succeeds") {
  std::mt19937_64 rng(11);
  int cyclic = 0;
  for (int i = 0; i < 300; ++i) {
    const auto g = random_dag(rng, true);
    bool sorted = true;
    try {
      topo_order(g);
    } catch (const GraphError&) {
      sorted = false;
      ++cyclic;
    }
    CHECK(validate_graph(g).empty() == sorted);
  }
  CHECK(cyclic > 0);
}
