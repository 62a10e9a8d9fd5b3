// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/train_expand.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>
#include <unordered_map>

namespace swapsim {
namespace {

constexpr const char* kSerialOrderKey = "serial_order";
constexpr const char* kStaticBytesKey = "static_bytes";

std::string join(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ' ';
    out += id;
  }
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string id; in >> id;) out.push_back(id);
  return out;
}

void require_valid(const GraphSpec& g) {
  auto report = validate_graph(g);
  if (!report.empty()) {
    throw GraphError("invalid graph: " + report.front().kind + ": " + report.front().detail);
  }
}

bool is_feature_map_producer(const NodeSpec& n) {
  return n.kind != NodeKind::kGrad && n.kind != NodeKind::kLoss;
}

TensorDesc like(const TensorDesc& t, std::string id, const NodeSpec& producer) {
  TensorDesc out = t;
  out.id = std::move(id);
  out.producer = producer.id;
  out.scope = producer.scope;
  return out;
}

}  // namespace

std::uint64_t TrainingGraph::static_bytes() const {
  auto it = graph.metadata.find(kStaticBytesKey);
  if (it == graph.metadata.end()) return 0;
  std::uint64_t v = 0;
  auto [_, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc()) throw GraphError("bad static_bytes metadata '" + it->second + "'");
  return v;
}

std::size_t TrainingGraph::first_backward_position() const {
  GraphIndex index(graph);
  for (std::size_t i = 0; i < serial_order.size(); ++i) {
    if (index.node_at(serial_order[i]).phase == Phase::kBackward) return i;
  }
  return serial_order.size();
}

TrainingGraph expand_training_graph(const GraphSpec& g, const ExpandOptions& opts) {
  require_valid(g);
  for (const auto& n : g.nodes) {
    if (n.phase != Phase::kForward || n.kind == NodeKind::kGrad || n.kind == NodeKind::kSwapIn ||
        n.kind == NodeKind::kSwapOut) {
      throw GraphError("graph already contains backward or io node '" + n.id + "'");
    }
  }
  if (opts.backward_cost_ratio < 0) throw GraphError("backward cost ratio must be non-negative");

  GraphSpec out = g;
  std::vector<std::string> loss_ids;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kLoss) loss_ids.push_back(n.id);
  }
  if (loss_ids.size() > 1) throw GraphError("graph has more than one loss node");
  if (loss_ids.empty() && !g.nodes.empty()) {
    GraphIndex index(g);
    NodeSpec loss;
    loss.id = "loss";
    loss.kind = NodeKind::kLoss;
    loss.scope = "loss";
    for (const auto& t : g.tensors) {
      if (index.consumers_of(t.id).empty()) loss.inputs.push_back(t.id);
    }
    loss.outputs = {"loss:0"};
    out.tensors.push_back(TensorDesc{"loss:0", "loss", {1}, 1, 4, "loss"});
    out.nodes.push_back(loss);
    loss_ids.push_back(loss.id);
  }

  std::vector<std::string> forward;
  for (const auto& id : topo_order(out)) {
    if (loss_ids.empty() || id != loss_ids.front()) forward.push_back(id);
  }

  GraphIndex index(out);
  std::vector<NodeSpec> new_nodes;
  std::vector<TensorDesc> new_tensors;
  std::unordered_map<std::string, std::vector<std::string>> extra_outputs;

  auto partial = [](const std::string& consumer, const std::string& tensor) {
    return "grad/" + consumer + "/" + tensor;
  };

  if (!loss_ids.empty()) {
    const auto& loss = index.node_at(loss_ids.front());
    std::set<std::string> seen;
    for (const auto& in : loss.inputs) {
      if (!seen.insert(in).second) continue;
      auto id = partial(loss.id, in);
      new_tensors.push_back(like(index.tensor_at(in), id, loss));
      extra_outputs[loss.id].push_back(id);
    }
  }

  for (auto it = forward.rbegin(); it != forward.rend(); ++it) {
    const auto& f = index.node_at(*it);
    NodeSpec grad;
    grad.id = "grad/" + f.id;
    grad.kind = NodeKind::kGrad;
    grad.scope = f.scope;
    grad.phase = Phase::kBackward;
    grad.origin = f.id;
    grad.cost_units = opts.backward_cost_ratio * f.cost_units;
    for (const auto& o : f.outputs) {
      for (auto c : index.consumers_of(o)) grad.inputs.push_back(partial(out.nodes[c].id, o));
    }
    for (const auto& o : f.outputs) grad.inputs.push_back(o);
    if (!f.inputs.empty()) {
      std::set<std::string> seen;
      for (const auto& in : f.inputs) {
        if (!seen.insert(in).second) continue;
        grad.outputs.push_back(partial(f.id, in));
        new_tensors.push_back(like(index.tensor_at(in), grad.outputs.back(), grad));
      }
    } else {
      for (const auto& o : f.outputs) {
        grad.outputs.push_back("grad/" + o);
        new_tensors.push_back(like(index.tensor_at(o), grad.outputs.back(), grad));
      }
    }
    new_nodes.push_back(std::move(grad));
  }

  for (auto& n : out.nodes) {
    auto e = extra_outputs.find(n.id);
    if (e != extra_outputs.end()) n.outputs.insert(n.outputs.end(), e->second.begin(), e->second.end());
  }
  std::vector<std::string> serial = forward;
  serial.insert(serial.end(), loss_ids.begin(), loss_ids.end());
  for (const auto& n : new_nodes) serial.push_back(n.id);
  out.nodes.insert(out.nodes.end(), new_nodes.begin(), new_nodes.end());
  out.tensors.insert(out.tensors.end(), new_tensors.begin(), new_tensors.end());
  out.metadata[kStaticBytesKey] = std::to_string(opts.static_bytes);
  {
    std::ostringstream ratio;
    ratio << opts.backward_cost_ratio;
    out.metadata["backward_cost_ratio"] = ratio.str();
  }
  return make_training_graph(canonicalize(std::move(out)), std::move(serial));
}

TrainingGraph make_training_graph(GraphSpec g, std::vector<std::string> serial_order) {
  require_valid(g);
  GraphIndex index(g);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < serial_order.size(); ++i) {
    const auto& n = index.node_at(serial_order[i]);
    if (n.is_io()) throw GraphError("io node '" + n.id + "' cannot appear in the serial order");
    if (!pos.emplace(n.id, i).second) throw GraphError("node '" + n.id + "' repeated in serial order");
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.is_io()) continue;
    if (!pos.contains(n.id)) throw GraphError("compute node '" + n.id + "' missing from serial order");
    for (auto p : index.preds(i)) {
      const auto& pred = g.nodes[p];
      if (!pred.is_io() && pos.at(pred.id) >= pos.at(n.id)) {
        throw GraphError("serial order puts '" + n.id + "' before its predecessor '" + pred.id + "'");
      }
    }
  }

  TrainingGraph tg;
  for (const auto& n : g.nodes) {
    if (n.phase != Phase::kBackward) continue;
    for (const auto& in : n.inputs) {
      auto p = index.producer_of(in);
      if (p && g.nodes[*p].phase == Phase::kForward && g.nodes[*p].kind != NodeKind::kLoss) {
        tg.reuse_edges.emplace_back(in, n.id);
      }
    }
  }
  std::sort(tg.reuse_edges.begin(), tg.reuse_edges.end());
  tg.reuse_edges.erase(std::unique(tg.reuse_edges.begin(), tg.reuse_edges.end()), tg.reuse_edges.end());
  g.metadata[kSerialOrderKey] = join(serial_order);
  tg.graph = std::move(g);
  tg.serial_order = std::move(serial_order);
  return tg;
}

TrainingGraph training_graph_from_spec(GraphSpec g) {
  auto it = g.metadata.find(kSerialOrderKey);
  if (it == g.metadata.end()) throw GraphError("graph is not an expanded training graph");
  auto order = split(it->second);
  return make_training_graph(std::move(g), std::move(order));
}

std::vector<CrossPhaseEdge> cross_phase_edges(const TrainingGraph& tg) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < tg.serial_order.size(); ++i) pos.emplace(tg.serial_order[i], i);
  GraphIndex index(tg.graph);
  std::vector<CrossPhaseEdge> edges;
  for (const auto& [tensor, consumer] : tg.reuse_edges) {
    auto p = index.producer_of(tensor);
    edges.push_back({tensor, pos.at(tg.graph.nodes[*p].id), pos.at(consumer)});
  }
  std::sort(edges.begin(), edges.end(), [](const CrossPhaseEdge& a, const CrossPhaseEdge& b) {
    return std::tie(a.producer_pos, a.consumer_pos, a.tensor) < std::tie(b.producer_pos, b.consumer_pos, b.tensor);
  });
  return edges;
}

LivenessReport static_peak_estimate(const TrainingGraph& tg, const RewritePlan* plan) {
  const auto& g = tg.graph;
  GraphIndex index(g);
  const std::size_t positions = tg.serial_order.size();

  std::vector<std::size_t> pos(g.nodes.size(), 0);
  std::vector<bool> placed(g.nodes.size(), false);
  for (std::size_t i = 0; i < positions; ++i) {
    auto n = *index.node(tg.serial_order[i]);
    pos[n] = i;
    placed[n] = true;
  }
  // io nodes: swap_out right after its producer, swap_in right after its
  // trigger.
  for (const auto& id : topo_order(g)) {
    auto n = *index.node(id);
    if (placed[n]) continue;
    const auto& node = g.nodes[n];
    std::size_t at = 0;
    bool has_control = false;
    for (const auto& e : g.control_edges) {
      if (e.to == node.id) {
        auto p = *index.node(e.from);
        at = std::max(at, pos[p] + 1);
        has_control = true;
      }
    }
    if (!has_control) {
      for (auto p : index.preds(n)) {
        at = std::max(at, pos[p] + (node.kind == NodeKind::kSwapOut && !g.nodes[p].is_io() ? 1 : 0));
      }
    }
    pos[n] = std::min(at, positions == 0 ? 0 : positions - 1);
    placed[n] = true;
  }

  std::set<std::string> virtual_swaps;
  std::unordered_map<std::string, const SwapEntry*> entries;
  if (plan != nullptr) {
    for (const auto& s : plan->swapped) {
      if (!index.tensor(s.tensor)) throw GraphError("plan references unknown tensor '" + s.tensor + "'");
      if (!index.node(s.swap_out)) {
        if (!index.node(s.trigger)) throw GraphError("plan references unknown trigger '" + s.trigger + "'");
        virtual_swaps.insert(s.tensor);
        entries.emplace(s.tensor, &s);
      }
    }
    for (const auto& c : plan->checkpoints) {
      if (!index.tensor(c)) throw GraphError("plan references unknown tensor '" + c + "'");
    }
    for (const auto& seg : plan->recompute_segments) {
      if (!seg.nodes.empty() && !index.node("recompute/" + seg.nodes.front())) {
        throw GraphError("recompute plan must be estimated on the rewritten graph");
      }
    }
  }

  LivenessReport report;
  report.static_bytes = tg.static_bytes();
  for (const auto& t : g.tensors) {
    auto p = *index.producer_of(t.id);
    const auto& producer = g.nodes[p];
    if (producer.kind == NodeKind::kSwapOut) continue;  // host-side copy
    const std::uint64_t bytes = tensor_bytes(t);
    const bool fmap = is_feature_map_producer(producer);
    const std::size_t first = pos[p];
    if (virtual_swaps.contains(t.id)) {
      std::size_t fwd_last = first + 1;
      std::optional<std::size_t> bwd_last;
      for (auto c : index.consumers_of(t.id)) {
        if (g.nodes[c].phase == Phase::kBackward) {
          bwd_last = std::max(bwd_last.value_or(0), pos[c]);
        } else {
          fwd_last = std::max(fwd_last, pos[c]);
        }
      }
      if (!bwd_last) throw GraphError("swapped tensor '" + t.id + "' has no backward consumer");
      report.intervals.push_back({t.id, first, fwd_last, bytes, fmap});
      const std::size_t arrive = std::min(pos[*index.node(entries.at(t.id)->trigger)] + 1, *bwd_last);
      report.intervals.push_back({t.id, arrive, *bwd_last, bytes, fmap});
      continue;
    }
    std::size_t last = first;
    for (auto c : index.consumers_of(t.id)) last = std::max(last, pos[c]);
    report.intervals.push_back({t.id, first, last, bytes, fmap});
  }

  std::vector<std::int64_t> total(positions + 1, 0), fmaps(positions + 1, 0);
  for (const auto& iv : report.intervals) {
    auto b = static_cast<std::int64_t>(iv.bytes);
    total[iv.first] += b;
    total[iv.last + 1] -= b;
    if (iv.feature_map) {
      fmaps[iv.first] += b;
      fmaps[iv.last + 1] -= b;
    }
  }
  std::int64_t running = 0, running_fm = 0, best = 0, best_fm = 0;
  for (std::size_t i = 0; i < positions; ++i) {
    running += total[i];
    running_fm += fmaps[i];
    if (running > best) {
      best = running;
      report.peak_position = i;
    }
    best_fm = std::max(best_fm, running_fm);
  }
  report.peak_bytes = report.static_bytes + static_cast<std::uint64_t>(best);
  report.feature_map_peak_bytes = static_cast<std::uint64_t>(best_fm);
  return report;
}

nlohmann::json liveness_to_json(const LivenessReport& r) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& iv : r.intervals) {
    intervals.push_back({{"tensor", iv.tensor},
                         {"first", iv.first},
                         {"last", iv.last},
                         {"bytes", iv.bytes},
                         {"feature_map", iv.feature_map}});
  }
  return {{"static_bytes", r.static_bytes},
          {"peak_bytes", r.peak_bytes},
          {"peak_position", r.peak_position},
          {"feature_map_peak_bytes", r.feature_map_peak_bytes},
          {"intervals", std::move(intervals)}};
}

}  // namespace swapsim
