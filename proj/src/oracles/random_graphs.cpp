// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/oracles/random_graphs.hpp"

#include <array>

namespace swapsim::oracles {

GraphSpec random_forward_graph(std::mt19937_64& rng, const RandomGraphOptions& opts) {
  constexpr std::array kKinds{NodeKind::kConv, NodeKind::kMatmul, NodeKind::kActivation, NodeKind::kNorm,
                              NodeKind::kConcat, NodeKind::kPool};
  std::uniform_int_distribution<int> count(opts.min_nodes, opts.max_nodes);
  std::uniform_int_distribution<int> elems(2, opts.max_elements);
  std::uniform_int_distribution<std::size_t> kind(0, kKinds.size() - 1);
  std::uniform_real_distribution<double> cost(1.0, opts.max_cost);
  std::bernoulli_distribution second_input(0.35);

  GraphSpec g;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    NodeSpec node;
    node.id = "rand/op" + std::to_string(i);
    node.scope = node.id;
    node.kind = i == 0 ? NodeKind::kConv : kKinds[kind(rng)];
    node.cost_units = cost(rng);
    if (i > 0) {
      node.inputs.push_back("rand/op" + std::to_string(i - 1) + ":0");
      if (i > 1 && second_input(rng)) {
        std::uniform_int_distribution<int> earlier(0, i - 2);
        node.inputs.push_back("rand/op" + std::to_string(earlier(rng)) + ":0");
      }
    }
    node.outputs.push_back(node.id + ":0");
    g.tensors.push_back(TensorDesc{node.outputs.back(), node.id, {elems(rng)}, 1, 4, node.scope});
    g.nodes.push_back(std::move(node));
  }
  return canonicalize(std::move(g));
}

}  // namespace swapsim::oracles
