// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "swapsim/graph.hpp"

namespace swapsim::oracles {

struct RandomGraphOptions {
  int min_nodes = 3;
  int max_nodes = 11;
  int max_elements = 64;  // per tensor
  double max_cost = 10.0;
};

// Forward-only DAG "rand/op<i>" with single-output nodes. op0 has no inputs;
// every later node reads the previous tensor and, sometimes, an earlier one.
GraphSpec random_forward_graph(std::mt19937_64& rng, const RandomGraphOptions& opts = {});

}  // namespace swapsim::oracles
