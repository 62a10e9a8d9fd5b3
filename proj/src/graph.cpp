// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/graph.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <array>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <utility>

namespace swapsim {
namespace {

constexpr std::array<std::pair<NodeKind, std::string_view>, 14> kKindNames{{
    {NodeKind::kConv, "conv"},
    {NodeKind::kMatmul, "matmul"},
    {NodeKind::kNorm, "norm"},
    {NodeKind::kActivation, "activation"},
    {NodeKind::kConcat, "concat"},
    {NodeKind::kPool, "pool"},
    {NodeKind::kUpsample, "upsample"},
    {NodeKind::kLoss, "loss"},
    {NodeKind::kGrad, "grad"},
    {NodeKind::kSwapOut, "swap_out"},
    {NodeKind::kSwapIn, "swap_in"},
    {NodeKind::kRecompute, "recompute"},
    {NodeKind::kSource, "source"},
    {NodeKind::kSink, "sink"},
}};

constexpr std::array<std::pair<Phase, std::string_view>, 3> kPhaseNames{{
    {Phase::kForward, "forward"},
    {Phase::kBackward, "backward"},
    {Phase::kIo, "io"},
}};

const std::vector<std::size_t> kNoConsumers;

void sort_unique(std::vector<std::size_t>& v, const GraphSpec& g) {
  std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
    return g.nodes[a].id < g.nodes[b].id;
  });
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Kahn's algorithm with a min-heap on node id. Returns the order found; it is
// shorter than the node count when a cycle exists.
std::vector<std::size_t> kahn(const GraphIndex& index) {
  const auto& g = index.graph();
  std::vector<std::size_t> indegree(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) indegree[i] = index.preds(i).size();

  auto later = [&](std::size_t a, std::size_t b) { return g.nodes[a].id > g.nodes[b].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(later)> ready(later);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    std::size_t n = ready.top();
    ready.pop();
    order.push_back(n);
    for (std::size_t s : index.succs(n)) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  return order;
}

// Given a Kahn order that stalled, walks predecessors among the unvisited
// nodes until one repeats; that node lies on a cycle.
std::size_t cycle_member(const GraphIndex& index, const std::vector<std::size_t>& order) {
  const auto& g = index.graph();
  std::vector<bool> done(g.nodes.size(), false);
  for (std::size_t n : order) done[n] = true;
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!done[i] && (!first || g.nodes[i].id < g.nodes[*first].id)) first = i;
  }
  std::size_t start = *first;
  std::vector<bool> seen(g.nodes.size(), false);
  std::size_t cur = start;
  while (!seen[cur]) {
    seen[cur] = true;
    for (std::size_t p : index.preds(cur)) {
      if (!done[p]) {
        cur = p;
        break;
      }
    }
  }
  return cur;
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::string_view to_string(Phase phase) {
  for (const auto& [p, name] : kPhaseNames) {
    if (p == phase) return name;
  }
  return "unknown";
}

std::optional<NodeKind> parse_node_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view name) {
  for (const auto& [p, n] : kPhaseNames) {
    if (n == name) return p;
  }
  return std::nullopt;
}

std::int64_t TensorDesc::elements() const {
  std::int64_t n = channels;
  for (auto e : shape) n *= e;
  return n;
}

std::uint64_t tensor_bytes(const TensorDesc& t) {
  auto mul = [&](std::uint64_t acc, std::int64_t f) {
    if (f <= 0) {
      throw GraphError("tensor '" + t.id + "' has a non-positive extent");
    }
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(acc, static_cast<std::uint64_t>(f), &out)) {
      throw GraphError("byte size of tensor '" + t.id + "' overflows");
    }
    return out;
  };
  std::uint64_t bytes = 1;
  for (auto e : t.shape) bytes = mul(bytes, e);
  bytes = mul(bytes, t.channels);
  return mul(bytes, t.elem_bytes);
}

GraphSpec canonicalize(GraphSpec g) {
  std::sort(g.nodes.begin(), g.nodes.end(),
            [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });
  std::sort(g.tensors.begin(), g.tensors.end(),
            [](const TensorDesc& a, const TensorDesc& b) { return a.id < b.id; });
  std::sort(g.control_edges.begin(), g.control_edges.end());
  return g;
}

GraphIndex::GraphIndex(const GraphSpec& g) : graph_(&g) {
  for (std::size_t i = 0; i < g.nodes.size(); ++i) nodes_.emplace(g.nodes[i].id, i);
  for (std::size_t i = 0; i < g.tensors.size(); ++i) tensors_.emplace(g.tensors[i].id, i);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& out : g.nodes[i].outputs) producers_.emplace(out, i);
    for (const auto& in : g.nodes[i].inputs) consumers_[in].push_back(i);
  }
  for (auto& [_, list] : consumers_) sort_unique(list, g);

  preds_.resize(g.nodes.size());
  succs_.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& in : g.nodes[i].inputs) {
      auto p = producers_.find(in);
      if (p == producers_.end()) continue;
      preds_[i].push_back(p->second);
      succs_[p->second].push_back(i);
    }
  }
  for (const auto& e : g.control_edges) {
    auto f = nodes_.find(e.from);
    auto t = nodes_.find(e.to);
    if (f == nodes_.end() || t == nodes_.end()) continue;
    preds_[t->second].push_back(f->second);
    succs_[f->second].push_back(t->second);
  }
  for (auto& v : preds_) sort_unique(v, g);
  for (auto& v : succs_) sort_unique(v, g);
}

std::optional<std::size_t> GraphIndex::node(std::string_view id) const {
  auto it = nodes_.find(std::string(id));
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> GraphIndex::tensor(std::string_view id) const {
  auto it = tensors_.find(std::string(id));
  if (it == tensors_.end()) return std::nullopt;
  return it->second;
}

const NodeSpec& GraphIndex::node_at(std::string_view id) const {
  auto n = node(id);
  if (!n) throw GraphError("unknown node '" + std::string(id) + "'");
  return graph_->nodes[*n];
}

const TensorDesc& GraphIndex::tensor_at(std::string_view id) const {
  auto t = tensor(id);
  if (!t) throw GraphError("unknown tensor '" + std::string(id) + "'");
  return graph_->tensors[*t];
}

std::optional<std::size_t> GraphIndex::producer_of(std::string_view tensor_id) const {
  auto it = producers_.find(std::string(tensor_id));
  if (it == producers_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& GraphIndex::consumers_of(std::string_view tensor_id) const {
  auto it = consumers_.find(std::string(tensor_id));
  return it == consumers_.end() ? kNoConsumers : it->second;
}

ValidationReport validate_graph(const GraphSpec& g) {
  ValidationReport report;
  auto add = [&](std::string_view kind, std::string detail) {
    report.push_back({std::string(kind), std::move(detail)});
  };

  std::set<std::string> seen;
  for (const auto& n : g.nodes) {
    if (!seen.insert(n.id).second) add(kDuplicateId, "node '" + n.id + "'");
    if (n.cost_units < 0) add(kNegativeCost, "node '" + n.id + "'");
    if (n.is_io() && n.cost_units != 0) add(kNegativeCost, "io node '" + n.id + "' carries compute cost");
  }
  seen.clear();
  for (const auto& t : g.tensors) {
    if (!seen.insert(t.id).second) add(kDuplicateId, "tensor '" + t.id + "'");
    try {
      tensor_bytes(t);
    } catch (const GraphError& e) {
      add(kNegativeSize, e.what());
    }
  }

  GraphIndex index(g);
  std::map<std::string, std::string> produced_by;
  for (const auto& n : g.nodes) {
    for (const auto& out : n.outputs) {
      auto [it, fresh] = produced_by.emplace(out, n.id);
      if (!fresh) {
        add(kProducerMismatch, "tensor '" + out + "' produced by '" + it->second + "' and '" + n.id + "'");
        continue;
      }
      auto t = index.tensor(out);
      if (!t) {
        add(kDanglingTensor, "output '" + out + "' of node '" + n.id + "' is not declared");
      } else if (g.tensors[*t].producer != n.id) {
        add(kProducerMismatch, "tensor '" + out + "' declares producer '" + g.tensors[*t].producer +
                                   "' but is output of '" + n.id + "'");
      }
    }
  }
  for (const auto& t : g.tensors) {
    if (!produced_by.contains(t.id)) {
      add(kProducerMismatch, "tensor '" + t.id + "' is not the output of any node");
    }
  }
  for (const auto& n : g.nodes) {
    for (const auto& in : n.inputs) {
      if (!produced_by.contains(in)) {
        add(kDanglingTensor, "node '" + n.id + "' consumes '" + in + "' which has no producer");
      }
    }
  }
  for (const auto& e : g.control_edges) {
    if (!index.node(e.from) || !index.node(e.to)) {
      add(kUnknownNode, "control edge " + e.from + " -> " + e.to);
    }
  }

  auto order = kahn(index);
  if (order.size() != g.nodes.size()) {
    add(kCycle, "node '" + g.nodes[cycle_member(index, order)].id + "' lies on a cycle");
  }
  return report;
}

std::vector<std::string> topo_order(const GraphSpec& g) {
  GraphIndex index(g);
  auto order = kahn(index);
  if (order.size() != g.nodes.size()) {
    throw GraphError("cycle detected involving node '" + g.nodes[cycle_member(index, order)].id + "'");
  }
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (auto n : order) ids.push_back(g.nodes[n].id);
  return ids;
}

std::map<std::string, int> bfs_depths(const GraphSpec& g) {
  GraphIndex index(g);
  std::vector<int> depth(g.nodes.size(), -1);
  std::deque<std::size_t> queue;
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].inputs.empty()) sources.push_back(i);
  }
  sort_unique(sources, g);
  for (auto s : sources) {
    depth[s] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    for (auto s : index.succs(n)) {
      if (depth[s] < 0) {
        depth[s] = depth[n] + 1;
        queue.push_back(s);
      }
    }
  }
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) out.emplace(g.nodes[i].id, depth[i]);
  return out;
}

bool scope_matches(std::string_view pattern, std::string_view scope) {
  return ::fnmatch(std::string(pattern).c_str(), std::string(scope).c_str(), 0) == 0;
}

bool scope_matches_any(const std::vector<std::string>& patterns, std::string_view scope) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return scope_matches(p, scope); });
}

}  // namespace swapsim
