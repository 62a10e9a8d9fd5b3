// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "swapsim/micro_exec.hpp"
#include "swapsim/model_gen.hpp"
#include "swapsim/oracles/verify_suite.hpp"
#include "swapsim/rewrite.hpp"

using namespace swapsim;

namespace {

TrainingGraph chain(int n, std::vector<NodeKind> kinds = {NodeKind::kConv}, std::uint64_t bytes = 64) {
  return expand_training_graph(gen_chain(n, bytes, 1.0, kinds));
}

RewriteConfig recompute(CheckpointPolicy p) {
  RewriteConfig c;
  c.mode = RewriteMode::kRecompute;
  c.ckpt_policy = p;
  return c;
}

TrainingGraph toy_unet() { return expand_training_graph(gen_unet3d(oracles::toy_unet_params())); }

}  // namespace

TEST_CASE("run_numeric: rewrites reproduce the baseline exactly") {
  const auto tg = chain(2);
  const auto base = run_numeric(tg, 42);
  CHECK(std::isfinite(base.loss));
  CHECK(base.loss > 0);
  REQUIRE(base.input_gradients.contains("grad/t0"));
  CHECK(base.input_gradients.at("grad/t0").size() == 16);

  const auto swapped = run_numeric(apply_rewrite(tg, preset_config("paper-c1")).graph, 42);
  CHECK(swapped.loss == base.loss);
  CHECK(swapped.gradients == base.gradients);

  const auto rc = run_numeric(apply_rewrite(tg, recompute(CheckpointPolicy::kSqrtN)).graph, 42);
  CHECK(rc.loss == base.loss);
  CHECK(rc.gradients == base.gradients);

  CHECK(run_numeric(tg, 43).loss != base.loss);
  CHECK(run_numeric(tg, 42).gradients == base.gradients);
}

TEST_CASE("run_numeric: io order in the trace") {
  const auto r = run_numeric(apply_rewrite(chain(3), preset_config("paper-c1")).graph, 1);
  auto at = [&](const std::string& id) {
    auto it = std::find(r.trace.begin(), r.trace.end(), id);
    REQUIRE(it != r.trace.end());
    return it - r.trace.begin();
  };
  CHECK(at("swap_out/t0") > at("op1"));
  CHECK(at("swap_in/t0") > at("swap_out/t0"));
  CHECK(at("swap_in/t0") < at("grad/op0"));
  CHECK(at("swap_in/t0") > at("grad/op1"));
}

TEST_CASE("run_numeric: residency violations and limits") {
  const auto tg = chain(3);
  const auto broken = oracles::break_swap_plan(apply_rewrite(tg, preset_config("paper-c1")).graph);
  CHECK_THROWS_WITH_AS(run_numeric(broken, 1), doctest::Contains("use-after-swap"), NumericError);

  const auto big = chain(2, {NodeKind::kConv}, 4 * (kMaxToyElements + 1));
  CHECK_THROWS_AS(run_numeric(big, 1), NumericError);

  NumericOptions bad;
  bad.input_override["t0"] = std::vector<double>(16, std::nan(""));
  CHECK_THROWS_AS(run_numeric(tg, 1, bad), NumericError);
}

TEST_CASE("run_numeric: loss is half the sum of squares") {
  // source -> pool passes values through unchanged, so the loss is a
  // function of the override alone
  const auto tg = expand_training_graph(gen_chain(2, 16, 1.0, {NodeKind::kSource, NodeKind::kPool}));
  NumericOptions o;
  o.input_override["t0"] = {1.0, -2.0, 0.5, 3.0};
  const auto r = run_numeric(tg, 9, o);
  CHECK(r.loss == doctest::Approx(0.5 * (1 + 4 + 0.25 + 9)));
  CHECK(r.input_gradients.at("grad/t0") == std::vector<double>{1.0, -2.0, 0.5, 3.0});
}

TEST_CASE("grad_check") {
  CHECK(grad_check(chain(3, {NodeKind::kConv, NodeKind::kActivation, NodeKind::kNorm}), 3, 1e-5).max_rel_error < 1e-4);

  const auto affine = expand_training_graph(gen_chain(2, 64, 1.0, {NodeKind::kSource, NodeKind::kConv}));
  CHECK(grad_check(affine, 5, 1e-5).max_rel_error < 1e-7);

  SUBCASE("a zero input sits on an activation kink and is resampled") {
    const auto relu = expand_training_graph(gen_chain(2, 16, 1.0, {NodeKind::kSource, NodeKind::kActivation}));
    NumericOptions zero;
    zero.input_override["t0"] = std::vector<double>(4, 0.0);
    const auto r = grad_check(relu, 7, 1e-5, 64, zero);
    CHECK(r.resamples > 0);
    CHECK(r.seed_used != 7);
    CHECK(r.max_rel_error < 1e-4);
  }
  CHECK(grad_check(toy_unet(), 1, 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("equivalence_check") {
  const auto tg = toy_unet();
  std::vector<EquivalenceCase> cases;
  for (const auto& name : preset_names()) cases.push_back({name, apply_rewrite(tg, preset_config(name)).graph});
  cases.push_back({"speed", apply_rewrite(tg, recompute(CheckpointPolicy::kSpeed)).graph});
  cases.push_back({"broken", oracles::break_swap_plan(cases.front().graph)});
  const auto report = equivalence_check(tg, cases, {1, 2, 3});
  REQUIRE(report.size() == cases.size());
  for (std::size_t i = 0; i + 1 < report.size(); ++i) {
    CHECK(report[i].label == cases[i].label);
    CHECK(report[i].error.empty());
    CHECK(report[i].max_deviation == 0.0);
  }
  CHECK(report.back().error.find("use-after-swap") != std::string::npos);
}
