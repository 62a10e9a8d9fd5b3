// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swapsim/model_gen.hpp"
#include "swapsim/rewrite.hpp"

namespace swapsim::oracles {

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  std::string detail;  // first failure
};

struct VerifySettings {
  std::vector<std::uint64_t> seeds;   // numeric seeds; 1..20 when empty
  std::size_t random_instances = 200;  // randomized graphs per property
  std::uint64_t graph_seed = 2026;
  // "broken-swap": adds a plan whose backward consumers bypass swap_in.
  std::string inject;
};

// The toy graphs the numeric checks run on: chains and a small U-Net.
UNetParams toy_unet_params();

// Deliberately broken swap rewrite: every backward consumer reads the
// original tensor again and the swap_in nodes are dropped.
TrainingGraph break_swap_plan(const TrainingGraph& rewritten);

// Semantic equivalence and gradient checks on the toy graphs, then the
// simulator property suites on randomized graphs.
std::vector<CheckResult> run_verify_suite(const VerifySettings& settings);

}  // namespace swapsim::oracles
