// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "swapsim/graph.hpp"
#include "swapsim/plan.hpp"

namespace swapsim {

// A forward graph extended with one grad node per forward op.
//
// serial_order lists compute nodes only (io nodes run on copy channels) and is
// mirrored in graph.metadata["serial_order"] so the graph file alone is
// enough to rebuild it.
struct TrainingGraph {
  GraphSpec graph;
  // (forward tensor, backward consumer) pairs.
  std::vector<std::pair<std::string, std::string>> reuse_edges;
  std::vector<std::string> serial_order;

  std::uint64_t static_bytes() const;
  // Position of the first backward node in serial_order (size() if none).
  std::size_t first_backward_position() const;
};

struct ExpandOptions {
  std::uint64_t static_bytes = 0;
  double backward_cost_ratio = 2.0;
};

// Grad node for forward op f is "grad/<f>". It reads the partial gradients
// "grad/<c>/<t>" that each forward consumer c emits for f's output t, plus t
// itself, and emits one partial per input of f. Zero-input ops emit the total
// gradient "grad/<t>" instead. A loss node is added over the sink tensors when
// the graph has none; it emits the seed partials.
TrainingGraph expand_training_graph(const GraphSpec& g, const ExpandOptions& opts = {});

// Builds a TrainingGraph around an already expanded (possibly rewritten)
// graph. serial_order must list every compute node exactly once in an order
// that respects all edges between compute nodes.
TrainingGraph make_training_graph(GraphSpec g, std::vector<std::string> serial_order);

// Rebuilds from a loaded file. Throws GraphError if the graph was never
// expanded.
TrainingGraph training_graph_from_spec(GraphSpec g);

struct CrossPhaseEdge {
  std::string tensor;
  std::size_t producer_pos = 0;
  std::size_t consumer_pos = 0;

  friend bool operator==(const CrossPhaseEdge&, const CrossPhaseEdge&) = default;
};

// Reuse edges with serial positions, by producer position then consumer.
std::vector<CrossPhaseEdge> cross_phase_edges(const TrainingGraph& tg);

struct TensorInterval {
  std::string tensor;
  std::size_t first = 0;
  std::size_t last = 0;
  std::uint64_t bytes = 0;
  bool feature_map = false;
};

struct LivenessReport {
  // Swapped tensors contribute two intervals.
  std::vector<TensorInterval> intervals;
  std::uint64_t static_bytes = 0;
  // Static bytes plus every resident tensor, gradients included.
  std::uint64_t peak_bytes = 0;
  std::size_t peak_position = 0;
  // Feature maps only (no gradient buffers, no static bytes).
  std::uint64_t feature_map_peak_bytes = 0;
};

// Schedule-independent residency over serial positions.
//
// Without a plan (or for a graph that already contains its rewrite nodes) a
// tensor lives from its producer to its last consumer. io nodes sit at
// producer + 1 (swap_out) and trigger + 1 (swap_in, which is issued when the
// trigger completes); host-side copies take no device memory.
//
// A swap plan may also be applied to the un-rewritten graph: each swapped
// tensor then lives over [producer, max(producer + 1, last forward consumer)]
// and [trigger + 1, last backward consumer].
//
// Recompute plans need the rewritten graph. Throws GraphError on unknown
// tensors or when a recompute plan is paired with an un-rewritten graph.
LivenessReport static_peak_estimate(const TrainingGraph& tg, const RewritePlan* plan = nullptr);

nlohmann::json liveness_to_json(const LivenessReport& r);

}  // namespace swapsim
