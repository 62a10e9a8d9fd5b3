// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace swapsim {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind {
  kConv,
  kMatmul,
  kNorm,
  kActivation,
  kConcat,
  kPool,
  kUpsample,
  kLoss,
  kGrad,
  kSwapOut,
  kSwapIn,
  kRecompute,
  kSource,
  kSink,
};

enum class Phase { kForward, kBackward, kIo };

std::string_view to_string(NodeKind kind);
std::string_view to_string(Phase phase);
std::optional<NodeKind> parse_node_kind(std::string_view name);
std::optional<Phase> parse_phase(std::string_view name);

struct TensorDesc {
  std::string id;
  std::string producer;
  std::vector<std::int64_t> shape;
  std::int64_t channels = 1;
  std::int64_t elem_bytes = 4;
  std::string scope;

  std::int64_t elements() const;

  friend bool operator==(const TensorDesc&, const TensorDesc&) = default;
};

// product(shape) * channels * elem_bytes. Throws GraphError on a
// non-positive factor or when the product overflows 64 bits.
std::uint64_t tensor_bytes(const TensorDesc& t);

struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::kConv;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double cost_units = 0.0;
  std::string scope;
  Phase phase = Phase::kForward;
  // Set on re-computation clones: id of the forward node being re-executed.
  std::string origin;

  bool is_io() const { return phase == Phase::kIo; }

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct ControlEdge {
  std::string from;
  std::string to;

  friend auto operator<=>(const ControlEdge&, const ControlEdge&) = default;
};

struct GraphSpec {
  std::vector<NodeSpec> nodes;
  std::vector<TensorDesc> tensors;
  std::vector<ControlEdge> control_edges;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

// Sorts nodes, tensors and control edges by id. Structural equality of two
// graphs is equality of their canonical forms.
GraphSpec canonicalize(GraphSpec g);

// Read-only lookup tables over a GraphSpec. The graph must outlive the index.
class GraphIndex {
 public:
  explicit GraphIndex(const GraphSpec& g);

  const GraphSpec& graph() const { return *graph_; }

  std::optional<std::size_t> node(std::string_view id) const;
  std::optional<std::size_t> tensor(std::string_view id) const;
  const NodeSpec& node_at(std::string_view id) const;
  const TensorDesc& tensor_at(std::string_view id) const;

  // Index of the node listing the tensor among its outputs, if any.
  std::optional<std::size_t> producer_of(std::string_view tensor_id) const;
  // Consumer node indices, sorted by node id.
  const std::vector<std::size_t>& consumers_of(std::string_view tensor_id) const;

  // Data and control predecessors/successors, deduplicated, sorted by id.
  const std::vector<std::size_t>& preds(std::size_t node) const { return preds_[node]; }
  const std::vector<std::size_t>& succs(std::size_t node) const { return succs_[node]; }

 private:
  const GraphSpec* graph_;
  std::unordered_map<std::string, std::size_t> nodes_;
  std::unordered_map<std::string, std::size_t> tensors_;
  std::unordered_map<std::string, std::size_t> producers_;
  std::unordered_map<std::string, std::vector<std::size_t>> consumers_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::vector<std::size_t>> succs_;
};

struct Violation {
  std::string kind;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};
using ValidationReport = std::vector<Violation>;

inline constexpr std::string_view kCycle = "cycle";
inline constexpr std::string_view kDanglingTensor = "dangling tensor";
inline constexpr std::string_view kDuplicateId = "duplicate id";
inline constexpr std::string_view kNegativeSize = "negative size";
inline constexpr std::string_view kProducerMismatch = "producer mismatch";
inline constexpr std::string_view kUnknownNode = "unknown node";
inline constexpr std::string_view kNegativeCost = "negative cost";

ValidationReport validate_graph(const GraphSpec& g);

// Kahn's algorithm over data and control edges; among ready nodes the
// lexicographically smallest id goes first. Throws GraphError naming a node
// on a cycle.
std::vector<std::string> topo_order(const GraphSpec& g);

// Shortest hop count from any node without inputs, over data and control
// edges.
std::map<std::string, int> bfs_depths(const GraphSpec& g);

// Glob match of a slash-separated scope path; '*' also crosses '/'.
bool scope_matches(std::string_view pattern, std::string_view scope);
bool scope_matches_any(const std::vector<std::string>& patterns, std::string_view scope);

}  // namespace swapsim
