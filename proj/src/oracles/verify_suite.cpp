// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/oracles/verify_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "swapsim/graph_io.hpp"
#include "swapsim/micro_exec.hpp"
#include "swapsim/oracles/oracles.hpp"
#include "swapsim/oracles/random_graphs.hpp"
#include "swapsim/sim.hpp"

namespace swapsim::oracles {
namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradEps = 1e-5;

class Check {
 public:
  explicit Check(std::string name) { result_.name = std::move(name); }

  void count() { ++result_.instances; }
  void fail(const std::string& detail) {
    if (result_.passed) result_.detail = detail;
    result_.passed = false;
  }
  void expect(bool ok, const std::string& detail) {
    if (!ok) fail(detail);
  }
  void expect_none(const std::vector<std::string>& problems, const std::string& where) {
    if (!problems.empty()) fail(where + ": " + problems.front());
  }
  CheckResult done() { return std::move(result_); }

 private:
  CheckResult result_;
};

std::vector<EquivalenceCase> rewrite_cases(const TrainingGraph& tg) {
  std::vector<EquivalenceCase> cases;
  for (const auto& name : preset_names()) cases.push_back({name, apply_rewrite(tg, preset_config(name)).graph});
  for (auto policy : {CheckpointPolicy::kSpeed, CheckpointPolicy::kSqrtN}) {
    RewriteConfig cfg;
    cfg.mode = RewriteMode::kRecompute;
    cfg.ckpt_policy = policy;
    cases.push_back({"recompute-" + std::string(to_string(policy)), apply_rewrite(tg, cfg).graph});
  }
  return cases;
}

struct ToyGraph {
  std::string label;
  TrainingGraph graph;
};

std::vector<ToyGraph> toy_graphs() {
  const std::vector<NodeKind> kinds{NodeKind::kConv, NodeKind::kActivation, NodeKind::kNorm, NodeKind::kPool};
  std::vector<ToyGraph> out;
  for (int n : {2, 3, 8, 24, 50}) {
    out.push_back({"chain-" + std::to_string(n), expand_training_graph(gen_chain(n, 64, 1.0, kinds))});
  }
  out.push_back({"unet-8", expand_training_graph(gen_unet3d(toy_unet_params()))});
  return out;
}

SimConfig random_sim_config() {
  SimConfig cfg;
  cfg.compute_rate = 1.0;
  cfg.d2h_bw = 40.0;
  cfg.h2d_bw = 40.0;
  return cfg;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); }

void numeric_checks(const VerifySettings& s, std::vector<CheckResult>& out) {
  Check equivalence("semantic equivalence");
  Check grads("gradient check");
  for (const auto& toy : toy_graphs()) {
    auto cases = rewrite_cases(toy.graph);
    if (s.inject == "broken-swap") {
      cases.push_back({"broken-swap", break_swap_plan(apply_rewrite(toy.graph, preset_config("paper-c1")).graph)});
    }
    for (const auto& e : equivalence_check(toy.graph, cases, s.seeds)) {
      equivalence.count();
      if (!e.error.empty()) {
        equivalence.fail(toy.label + " " + e.label + ": " + e.error);
      } else {
        equivalence.expect(e.max_deviation == 0.0,
                           toy.label + " " + e.label + ": deviation " + std::to_string(e.max_deviation));
      }
    }
    for (auto seed : s.seeds) {
      grads.count();
      auto r = grad_check(toy.graph, seed, kGradEps);
      grads.expect(r.max_rel_error < kGradTolerance,
                   toy.label + " seed " + std::to_string(seed) + ": error " + std::to_string(r.max_rel_error));
    }
  }
  out.push_back(equivalence.done());
  out.push_back(grads.done());
}

void property_checks(const VerifySettings& s, std::vector<CheckResult>& out) {
  Check deps("dependency soundness");
  Check memory("memory conservation");
  Check swaps("swap soundness");
  Check peak("peak monotonicity");
  Check liveness("liveness oracle");
  Check lb("lb monotonicity");
  Check determinism("determinism");
  Check oracle("schedule oracle");

  std::mt19937_64 rng(s.graph_seed);
  const auto cfg = random_sim_config();
  for (std::size_t i = 0; i < s.random_instances; ++i) {
    const auto fwd = random_forward_graph(rng);
    const auto tg = expand_training_graph(fwd);
    const std::string tag = "instance " + std::to_string(i);

    RewriteConfig all = preset_config("paper-c1");
    const auto candidates = swap_candidates(tg, all);

    // simulator soundness on the all-swap rewrite and a recompute rewrite
    RewriteConfig rc;
    rc.mode = RewriteMode::kRecompute;
    rc.ckpt_policy = CheckpointPolicy::kSqrtN;
    for (const auto& rewritten : {apply_rewrite(tg, all).graph, apply_rewrite(tg, rc).graph, tg}) {
      auto report = simulate(rewritten, cfg);
      deps.count();
      deps.expect_none(check_dependencies(rewritten, report), tag);
      deps.expect_none(check_channels_disjoint(report), tag);
      memory.count();
      memory.expect_none(check_memory(rewritten, cfg, report), tag);
      auto budgeted = cfg;
      budgeted.enforce_budget = true;
      budgeted.gpu_budget = report.peak_resident;
      auto constrained = simulate(rewritten, budgeted);
      memory.expect_none(check_memory(rewritten, budgeted, constrained), tag + " (budget)");
      memory.expect(close(constrained.makespan, report.makespan), tag + ": budget at the free-run peak changed makespan");
      swaps.count();
      swaps.expect_none(check_swap_soundness(rewritten, report), tag);
    }

    // static peak never grows as the swap set grows; brute-force scan agrees
    std::uint64_t previous = 0;
    for (std::size_t k = 0; k <= candidates.size(); ++k) {
      auto r = insert_swap_nodes(tg, std::vector<std::string>(candidates.begin(), candidates.begin() + k), 1);
      auto est = static_peak_estimate(r.graph, &r.plan);
      auto scan = brute_force_peak(r.graph);
      liveness.count();
      liveness.expect(est.peak_bytes == scan.peak_bytes && est.feature_map_peak_bytes == scan.feature_map_peak_bytes,
                      tag + " k=" + std::to_string(k) + ": estimate " + std::to_string(est.peak_bytes) +
                          " vs scan " + std::to_string(scan.peak_bytes));
      auto virt = static_peak_estimate(tg, &r.plan);
      liveness.expect(virt.peak_bytes == est.peak_bytes,
                      tag + " k=" + std::to_string(k) + ": virtual plan estimate differs from rewritten graph");
      peak.count();
      if (k > 0) peak.expect(est.peak_bytes <= previous, tag + ": peak grew when swapping " + std::to_string(k));
      previous = est.peak_bytes;
    }

    // lb monotonicity
    double last = 0;
    for (int l : {1, 2, 3, 5, 8, 20}) {
      auto c = all;
      c.lb = l;
      auto m = simulate(apply_rewrite(tg, c).graph, cfg).makespan;
      lb.count();
      if (l > 1) lb.expect(m <= last * (1 + 1e-12), tag + ": makespan rose from " + std::to_string(last) +
                                                          " to " + std::to_string(m) + " at lb " + std::to_string(l));
      last = m;
    }

    // determinism
    {
      auto a = apply_rewrite(tg, all);
      auto b = apply_rewrite(tg, all);
      determinism.count();
      determinism.expect(serialize_graph(a.graph.graph) == serialize_graph(b.graph.graph) &&
                             dump_document(plan_to_json(a.plan)) == dump_document(plan_to_json(b.plan)),
                         tag + ": rewrite output differs between runs");
      determinism.expect(dump_document(report_to_json(simulate(a.graph, cfg))) ==
                             dump_document(report_to_json(simulate(b.graph, cfg))),
                         tag + ": report differs between runs");
    }

    // exhaustive FIFO schedule oracle on up to three swapped tensors
    if (!candidates.empty()) {
      auto c = all;
      c.n_tensors = static_cast<int>(std::min<std::size_t>(3, candidates.size()));
      for (int l : {1, 3}) {
        c.lb = l;
        auto r = apply_rewrite(tg, c).graph;
        if (r.graph.nodes.size() > 30) continue;
        oracle.count();
        auto sim = simulate(r, cfg).makespan;
        auto best = fifo_schedule_oracle(r, cfg);
        oracle.expect(close(sim, best), tag + " lb " + std::to_string(l) + ": simulated " + std::to_string(sim) +
                                             " vs oracle " + std::to_string(best));
      }
    }
  }
  for (auto* c : {&deps, &memory, &swaps, &peak, &liveness, &lb, &determinism, &oracle}) out.push_back(c->done());
}

}  // namespace

UNetParams toy_unet_params() {
  UNetParams p;
  p.dims = {8, 8, 8};
  p.depth = 4;
  p.base_filters = 4;
  return p;
}

TrainingGraph break_swap_plan(const TrainingGraph& rewritten) {
  GraphSpec g = rewritten.graph;
  std::set<std::string> dropped;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kSwapIn) dropped.insert(n.id);
  }
  std::erase_if(g.nodes, [&](const NodeSpec& n) { return dropped.contains(n.id); });
  std::erase_if(g.tensors, [](const TensorDesc& t) { return t.id.starts_with("swapin/"); });
  std::erase_if(g.control_edges, [&](const ControlEdge& e) { return dropped.contains(e.to); });
  for (auto& n : g.nodes) {
    for (auto& in : n.inputs) {
      if (in.starts_with("swapin/")) in = in.substr(7);
    }
  }
  return make_training_graph(std::move(g), rewritten.serial_order);
}

std::vector<CheckResult> run_verify_suite(const VerifySettings& settings) {
  VerifySettings s = settings;
  if (s.seeds.empty()) {
    for (std::uint64_t i = 1; i <= 20; ++i) s.seeds.push_back(i);
  }
  std::vector<CheckResult> out;
  numeric_checks(s, out);
  property_checks(s, out);
  return out;
}

}  // namespace swapsim::oracles
