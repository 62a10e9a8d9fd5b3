// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "swapsim/graph_io.hpp"
#include "swapsim/model_gen.hpp"
#include "swapsim/oracles/oracles.hpp"
#include "swapsim/oracles/random_graphs.hpp"
#include "swapsim/rewrite.hpp"
#include "swapsim/train_expand.hpp"

using namespace swapsim;

TEST_CASE("expand_training_graph: chain of two") {
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0));
  CHECK(tg.graph.nodes.size() == 5);
  CHECK(tg.serial_order == std::vector<std::string>{"op0", "op1", "loss", "grad/op1", "grad/op0"});
  auto reuse = tg.reuse_edges;
  std::sort(reuse.begin(), reuse.end());
  CHECK(reuse == std::vector<std::pair<std::string, std::string>>{{"t0", "grad/op0"}, {"t1", "grad/op1"}});
  GraphIndex ix(tg.graph);
  CHECK(ix.node_at("grad/op1").cost_units == 2.0);
  CHECK(ix.node_at("grad/op0").phase == Phase::kBackward);
  CHECK(tg.first_backward_position() == 3);
}

TEST_CASE("expand_training_graph: grad order reverses forward order") {
  UNetParams p;
  p.dims = {16, 16, 16};
  p.depth = 3;
  const auto tg = expand_training_graph(gen_unet3d(p));
  std::vector<std::string> fwd, bwd;
  GraphIndex ix(tg.graph);
  for (const auto& id : tg.serial_order) {
    const auto& n = ix.node_at(id);
    if (n.kind == NodeKind::kGrad) bwd.push_back(n.origin);
    else if (n.kind != NodeKind::kLoss) fwd.push_back(id);
  }
  std::reverse(bwd.begin(), bwd.end());
  CHECK(bwd == fwd);
}

TEST_CASE("expand_training_graph: options and errors") {
  ExpandOptions opts;
  opts.static_bytes = 1234;
  opts.backward_cost_ratio = 3.0;
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0), opts);
  CHECK(tg.static_bytes() == 1234);
  CHECK(GraphIndex(tg.graph).node_at("grad/op0").cost_units == 3.0);
  CHECK_THROWS_WITH_AS(expand_training_graph(tg.graph), doctest::Contains("already"), GraphError);

  // the file alone is enough to rebuild the training graph
  const auto back = training_graph_from_spec(parse_graph(serialize_graph(tg.graph)));
  CHECK(back.serial_order == tg.serial_order);
  CHECK(back.static_bytes() == 1234);
  CHECK_THROWS_AS(training_graph_from_spec(gen_chain(2, 4, 1.0)), GraphError);
}

TEST_CASE("count_feature_maps on the small U-Net equals its forward outputs") {
  UNetParams p;
  p.dims = {8, 8, 8};
  p.depth = 2;
  const auto g = gen_unet3d(p);
  // every forward op except the loss owns exactly one output read by its grad
  std::size_t outputs = 0;
  for (const auto& n : g.nodes) {
    if (n.kind != NodeKind::kLoss) outputs += n.outputs.size();
  }
  CHECK(count_feature_maps(expand_training_graph(g).graph) == outputs);
}

TEST_CASE("cross_phase_edges") {
  const auto tg = expand_training_graph(gen_chain(3, 4, 1.0));
  const auto edges = cross_phase_edges(tg);
  REQUIRE(edges.size() == 3);
  CHECK(edges[0].tensor == "t0");
  for (const auto& e : edges) {
    CHECK(e.consumer_pos - e.producer_pos <= edges[0].consumer_pos - edges[0].producer_pos);
  }
  CHECK(cross_phase_edges(expand_training_graph(GraphSpec{})).empty());

  for (int n = 1; n <= 50; ++n) {
    const auto es = cross_phase_edges(expand_training_graph(gen_chain(n, 4, 1.0)));
    REQUIRE(es.size() == static_cast<std::size_t>(n));
    for (std::size_t i = 1; i < es.size(); ++i) {
      CHECK(es[i].producer_pos > es[i - 1].producer_pos);
      CHECK(es[i].consumer_pos - es[i].producer_pos < es[i - 1].consumer_pos - es[i - 1].producer_pos);
    }
  }
}

TEST_CASE("static_peak_estimate: chain of three") {
  constexpr std::uint64_t B = 4;
  const auto tg = expand_training_graph(gen_chain(3, B, 1.0));
  // serial: op0 op1 op2 loss grad/op2 grad/op1 grad/op0 (positions 0..6)
  const auto none = static_peak_estimate(tg);
  CHECK(none.feature_map_peak_bytes == 3 * B);
  CHECK(none.static_bytes == 0);

  // All-swap, lb 1, by hand: t0 [0,1], t1 [1,2], t2 [2,3] on the forward side;
  // swap-ins follow their triggers (loss, grad/op2, grad/op1) so the copies
  // live at [4,4], [5,5], [6,6]. At most two maps overlap.
  RewriteConfig all;
  all.mode = RewriteMode::kSwap;
  const auto r = apply_rewrite(tg, all);
  const auto swapped = static_peak_estimate(r.graph, &r.plan);
  CHECK(swapped.feature_map_peak_bytes == 2 * B);
  CHECK(static_peak_estimate(tg, &r.plan).feature_map_peak_bytes == 2 * B);

  const auto doc = liveness_to_json(swapped);
  CHECK(doc.at("feature_map_peak_bytes") == 2 * B);
  CHECK(doc.at("intervals").size() == swapped.intervals.size());
}

TEST_CASE("static_peak_estimate: static bytes and errors") {
  ExpandOptions opts;
  opts.static_bytes = 1000;
  const auto tg = expand_training_graph(gen_chain(3, 4, 1.0), opts);
  const auto plain = expand_training_graph(gen_chain(3, 4, 1.0));
  CHECK(static_peak_estimate(tg).peak_bytes == static_peak_estimate(plain).peak_bytes + 1000);

  RewritePlan bogus;
  bogus.mode = RewriteMode::kSwap;
  bogus.swapped.push_back({"nope", "swap_out/nope", "swap_in/nope", "op0"});
  CHECK_THROWS_WITH_AS(static_peak_estimate(tg, &bogus), doctest::Contains("nope"), GraphError);

  RewriteConfig rc;
  rc.mode = RewriteMode::kRecompute;
  rc.ckpt_policy = CheckpointPolicy::kSqrtN;
  const auto r = apply_rewrite(tg, rc);
  REQUIRE_FALSE(r.plan.recompute_segments.empty());
  CHECK_THROWS_AS(static_peak_estimate(tg, &r.plan), GraphError);
  CHECK_NOTHROW(static_peak_estimate(r.graph, &r.plan));
}

TEST_CASE("static_peak_estimate: unrewritten 192^3 U-Net exceeds 16 GiB") {
  // the fine-grained U-Net used by the full-size scenarios
  UNetParams p;
  p.dims = {192, 192, 192};
  p.convs_per_level = 31;
  p.base_filters = 6;
  const auto est = static_peak_estimate(expand_training_graph(gen_unet3d(p)));
  CHECK(est.feature_map_peak_bytes > (std::uint64_t{16} << 30));
}

TEST_CASE("liveness properties on random graphs") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 150; ++i) {
    const auto tg = expand_training_graph(oracles::random_forward_graph(rng));
    RewriteConfig all;
    all.mode = RewriteMode::kSwap;
    const auto candidates = swap_candidates(tg, all);

    // brute-force scan agrees with the estimate with and without a plan
    const auto base = static_peak_estimate(tg);
    CHECK(oracles::brute_force_peak(tg).peak_bytes == base.peak_bytes);

    // random nested swap sets S within S'
    std::vector<std::string> order = candidates;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> cut(0, order.size());
    auto a = cut(rng), b = cut(rng);
    if (a > b) std::swap(a, b);
    for (int lb : {1, 2, 4}) {
      const auto small = insert_swap_nodes(tg, {order.begin(), order.begin() + a}, lb);
      const auto large = insert_swap_nodes(tg, {order.begin(), order.begin() + b}, lb);
      const auto ps = static_peak_estimate(small.graph, &small.plan);
      const auto pl = static_peak_estimate(large.graph, &large.plan);
      CHECK(pl.peak_bytes <= ps.peak_bytes);
      CHECK(pl.feature_map_peak_bytes <= ps.feature_map_peak_bytes);
      CHECK(oracles::brute_force_peak(large.graph).peak_bytes == pl.peak_bytes);
    }

    // re-computation never beats all-swap on static peak
    const auto swap_all = apply_rewrite(tg, all);
    const auto swap_peak = static_peak_estimate(swap_all.graph, &swap_all.plan).peak_bytes;
    for (auto policy : {CheckpointPolicy::kSpeed, CheckpointPolicy::kSqrtN}) {
      RewriteConfig rc;
      rc.mode = RewriteMode::kRecompute;
      rc.ckpt_policy = policy;
      const auto r = apply_rewrite(tg, rc);
      CHECK(static_peak_estimate(r.graph, &r.plan).peak_bytes >= swap_peak);
    }
  }
}
