// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "swapsim/graph_io.hpp"
#include "swapsim/model_gen.hpp"
#include "swapsim/oracles/oracles.hpp"
#include "swapsim/oracles/random_graphs.hpp"
#include "swapsim/rewrite.hpp"
#include "swapsim/sim.hpp"

using namespace swapsim;

namespace {

SimConfig unit_config(double bw = 1e12) {
  SimConfig c;
  c.compute_rate = 1.0;
  c.d2h_bw = bw;
  c.h2d_bw = bw;
  return c;
}

RewriteConfig swap_all(int lb = 1) {
  RewriteConfig c;
  c.mode = RewriteMode::kSwap;
  c.lb = lb;
  return c;
}

TrainingGraph toy_unet() {
  UNetParams p;
  p.dims = {16, 16, 16};
  p.depth = 3;
  p.base_filters = 4;
  return expand_training_graph(gen_unet3d(p));
}

double forward_compute(const TrainingGraph& tg) {
  double sum = 0;
  for (const auto& n : tg.graph.nodes) {
    if (n.phase == Phase::kForward) sum += n.cost_units;
  }
  return sum;
}

}  // namespace

TEST_CASE("op_cost and xfer_cost") {
  NodeSpec n;
  n.cost_units = 10;
  SimConfig c;
  c.compute_rate = 10;
  CHECK(op_cost(n, c) == 1.0);
  n.cost_units = 0;
  CHECK(op_cost(n, c) == 0.0);
  NodeSpec io;
  io.kind = NodeKind::kSwapOut;
  io.phase = Phase::kIo;
  io.cost_units = 5;
  CHECK(op_cost(io, c) == 0.0);

  CHECK(std::round(xfer_cost(113'246'208, 40e9, 10e-6) * 1e7) / 10 == 2841.2);
  CHECK(xfer_cost(0, 40e9, 10e-6) == 10e-6);
  CHECK(xfer_cost(1 << 20, 2e9, 0) == doctest::Approx(xfer_cost(1 << 20, 1e9, 0) / 2));
}

TEST_CASE("SimConfig and link presets") {
  CHECK(link_preset("nvlink1").d2h_bw == 40e9);
  CHECK(link_preset("nvlink1").h2d_bw == 40e9);
  CHECK(link_preset("pcie3").d2h_bw == 16e9);
  CHECK(link_preset("pcie3").h2d_bw == 16e9);
  CHECK_THROWS_AS(link_preset("carrier-pigeon"), SimError);
  SimConfig c;
  c.compute_rate = 0;
  CHECK_THROWS_AS(c.validate(), SimError);
  c = SimConfig{};
  c.xfer_latency = -1;
  CHECK_THROWS_AS(c.validate(), SimError);
}

TEST_CASE("simulate: chain without a plan") {
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0));
  const auto r = simulate(tg, unit_config());
  // op0 1 + op1 1 + loss 0 + two grads at 2 each
  CHECK(r.makespan == 6.0);
  CHECK(r.stalls.empty());
  const auto s = stall_report(r);
  CHECK(s.total() == 0.0);
  CHECK(compute_busy(r) == r.makespan);
}

TEST_CASE("simulate: hand-computed swap timeline") {
  // chain 2, 4-byte tensors, 1 B/s links, swap t0 with lb 1:
  //   op0 [0,1]  op1 [1,2]  loss [2,2]  grad/op1 [2,4]
  //   swap_out/t0 [1,5]; trigger grad/op1 ends at 4, swap_in waits for the
  //   host copy: [5,9]; grad/op0 [9,11]
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0));
  const auto rw = insert_swap_nodes(tg, {"t0"}, 1);
  const auto r = simulate(rw.graph, unit_config(1.0));
  CHECK(r.makespan == 11.0);
  REQUIRE(r.stalls.size() == 1);
  CHECK(r.stalls[0].waiting_node == "grad/op0");
  CHECK(r.stalls[0].blocking == "swap_in/t0");
  CHECK(r.stalls[0].duration == 5.0);
  CHECK(r.stalls[0].phase == StallPhase::kBackward);
  CHECK(oracles::fifo_schedule_oracle(rw.graph, unit_config(1.0)) == 11.0);
  const auto s = stall_report(r);
  CHECK(s.total() + compute_busy(r) == doctest::Approx(r.makespan));
}

TEST_CASE("simulate: phase-boundary stall when swap-outs outlast the forward pass") {
  const auto tg = toy_unet();
  const auto rw = apply_rewrite(tg, preset_config("paper-c1"));
  GraphIndex ix(tg.graph);
  double bytes = 0;
  for (const auto& s : rw.plan.swapped) bytes += static_cast<double>(tensor_bytes(ix.tensor_at(s.tensor)));
  // bandwidth below the bytes-to-forward-compute ratio
  const auto cfg = unit_config(bytes / forward_compute(tg) / 2);
  const auto r = simulate(rw.graph, cfg);
  const auto& first_bwd = tg.serial_order[tg.first_backward_position()];
  bool boundary = false;
  for (const auto& s : r.stalls) {
    if (s.waiting_node == first_bwd && s.phase == StallPhase::kBoundary) boundary = true;
  }
  CHECK(boundary);
  CHECK(stall_report(r).boundary > 0);
  CHECK(stall_report(r).total() + compute_busy(r) == doctest::Approx(r.makespan));
}

TEST_CASE("simulate: budgets") {
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0));
  auto cfg = unit_config();
  cfg.enforce_budget = true;
  cfg.gpu_budget = 3;
  CHECK_THROWS_WITH_AS(simulate(tg, cfg), doctest::Contains("infeasible"), SimError);
  try {
    simulate(tg, cfg);
  } catch (const SimError& e) {
    CHECK(e.kind() == SimError::Kind::kInfeasible);
    CHECK(std::string(e.what()).find("tensor '") != std::string::npos);
  }
  // every tensor fits alone, but op1 cannot allocate t1 while t0 is held
  cfg.gpu_budget = 4;
  CHECK_THROWS_WITH_AS(simulate(tg, cfg), doctest::Contains("deadlock"), SimError);

  // budget at the free-run peak reproduces the free run
  const auto free_run = simulate(tg, unit_config());
  cfg.gpu_budget = free_run.peak_resident;
  const auto tight = simulate(tg, cfg);
  CHECK(tight.makespan == free_run.makespan);
  CHECK(tight.peak_resident <= cfg.gpu_budget);
}

TEST_CASE("simulate: static bytes count toward residency") {
  const auto tg = expand_training_graph(gen_chain(2, 4, 1.0));
  auto cfg = unit_config();
  const auto base = simulate(tg, cfg).peak_resident;
  cfg.static_bytes = 100;
  CHECK(simulate(tg, cfg).peak_resident == base + 100);
}

TEST_CASE("trace output") {
  SimReport one;
  one.events.push_back({"op0", Channel::kCompute, 0.0, 1.5});
  one.makespan = 1.5;
  const auto doc = parse_document(trace_json(one));
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 1);
  CHECK(doc[0].at("ph") == "X");
  CHECK(doc[0].at("name") == "op0");
  CHECK(doc[0].at("ts") == 0.0);
  CHECK(doc[0].at("dur") == 1.5e6);
  CHECK(doc[0].at("tid") == 0);

  const auto tg = expand_training_graph(gen_chain(3, 4, 1.0));
  const auto rw = apply_rewrite(tg, swap_all());
  const auto r = simulate(rw.graph, unit_config(1.0));
  for (const auto& e : parse_document(trace_json(r))) {
    const std::string name = e.at("name");
    const int tid = e.at("tid");
    if (name.starts_with("swap_out/")) CHECK(tid == 1);
    else if (name.starts_with("swap_in/")) CHECK(tid == 2);
    else CHECK(tid == 0);
  }
  const auto path = std::filesystem::temp_directory_path() / "swapsim_trace_test.json";
  emit_trace(r, path);
  const auto first = read_text_file(path);
  emit_trace(simulate(rw.graph, unit_config(1.0)), path);
  CHECK(read_text_file(path) == first);
  std::filesystem::remove(path);
  CHECK_THROWS(emit_trace(r, "/nonexistent-dir/x/trace.json"));
}

TEST_CASE("epoch_time") {
  CHECK(epoch_time(4.0, 171, 1.0) == 684.0);
  CHECK(epoch_time(0.5, 387, 1.0) == 387.0);
  CHECK(epoch_time(3.0, 387, 1.0) / epoch_time(3.0, 171, 1.0) == doctest::Approx(2.26).epsilon(1e-3));
  CHECK_THROWS_AS(epoch_time(1.0, 0, 0.0), SimError);
}

TEST_CASE("calibrate_compute_rate") {
  const auto tg = toy_unet();
  const auto rw = apply_rewrite(tg, preset_config("paper-c1"));
  auto cfg = unit_config(1e8);
  const double rate = calibrate_compute_rate(rw.graph, cfg, 2.0);
  cfg.compute_rate = rate;
  CHECK(simulate(rw.graph, cfg).makespan == doctest::Approx(2.0).epsilon(1e-6));
  CHECK_THROWS_WITH_AS(calibrate_compute_rate(rw.graph, unit_config(1.0), 1e-3),
                       doctest::Contains("transfers alone"), SimError);
}

TEST_CASE("sweep") {
  const auto tg = toy_unet();
  const auto base = unit_config(2e5);
  std::vector<SweepCell> presets;
  for (const auto& name : preset_names()) presets.push_back({name, preset_config(name), 2e5});
  const auto rows = sweep(tg, presets, base);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].label == preset_names()[i]);
    CHECK(rows[i].error.empty());
  }

  std::vector<SweepCell> lbs;
  for (int lb : {1, 5, 20}) lbs.push_back({"custom", swap_all(lb), 2e5});
  const auto by_lb = sweep(tg, lbs, base);
  REQUIRE(by_lb.size() == 3);
  CHECK(by_lb[0].lb == 1);
  CHECK(by_lb[2].lb == 20);
  CHECK(by_lb[1].makespan <= by_lb[0].makespan);
  CHECK(by_lb[2].makespan <= by_lb[1].makespan);

  std::vector<SweepCell> bws{{"custom", swap_all(), 40e3}, {"custom", swap_all(), 16e3}};
  const auto by_bw = sweep(tg, bws, base);
  REQUIRE(by_bw.size() == 2);
  CHECK(by_bw[0].bw == 16e3);
  CHECK(by_bw[0].makespan >= by_bw[1].makespan);

  auto budgeted = base;
  budgeted.enforce_budget = true;
  budgeted.gpu_budget = 1;
  const auto failed = sweep(tg, {{"custom", swap_all(), 2e5}, {"paper-c1", preset_config("paper-c1"), 2e5}}, budgeted);
  REQUIRE(failed.size() == 2);
  CHECK(failed[0].error.find("infeasible") != std::string::npos);
  CHECK(failed[1].error.find("infeasible") != std::string::npos);

  CHECK_THROWS_AS(sweep(tg, {}, base), SimError);
  CHECK(sweep_to_text(rows) == sweep_to_text(sweep(tg, presets, base)));
  CHECK(sweep_to_json(rows).size() == 4);
}

TEST_CASE("simulator properties on random graphs") {
  std::mt19937_64 rng(31);
  const auto cfg = unit_config(40.0);
  for (int i = 0; i < 120; ++i) {
    const auto tg = expand_training_graph(oracles::random_forward_graph(rng));
    RewriteConfig rc;
    rc.mode = RewriteMode::kRecompute;
    for (const auto& g : {apply_rewrite(tg, swap_all()).graph, apply_rewrite(tg, rc).graph}) {
      const auto r = simulate(g, cfg);
      CHECK(oracles::check_dependencies(g, r).empty());
      CHECK(oracles::check_channels_disjoint(r).empty());
      CHECK(oracles::check_memory(g, cfg, r).empty());
      CHECK(oracles::check_swap_soundness(g, r).empty());
      CHECK(stall_report(r).total() + compute_busy(r) == doctest::Approx(r.makespan));
      CHECK(dump_document(report_to_json(r)) == dump_document(report_to_json(simulate(g, cfg))));

      // halving the budget between the largest tensor and the peak never
      // breaks residency accounting
      auto limited = cfg;
      limited.enforce_budget = true;
      limited.gpu_budget = r.peak_resident - r.peak_resident / 8;
      try {
        const auto lr = simulate(g, limited);
        CHECK(lr.peak_resident <= limited.gpu_budget);
        CHECK(oracles::check_memory(g, limited, lr).empty());
        CHECK(oracles::check_dependencies(g, lr).empty());
      } catch (const SimError& e) {
        CHECK(e.kind() != SimError::Kind::kConfig);
      }
    }
    // slower links never help
    const auto g = apply_rewrite(tg, swap_all(2)).graph;
    CHECK(simulate(g, unit_config(10.0)).makespan >= simulate(g, cfg).makespan);
  }
}
