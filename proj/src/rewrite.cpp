// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/rewrite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

namespace swapsim {
namespace {

std::unordered_map<std::string, std::size_t> positions(const TrainingGraph& tg) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < tg.serial_order.size(); ++i) pos.emplace(tg.serial_order[i], i);
  return pos;
}

// tensor -> backward consumers, from the reuse edges.
std::map<std::string, std::vector<std::string>> backward_consumers(const TrainingGraph& tg) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [t, c] : tg.reuse_edges) out[t].push_back(c);
  return out;
}

const NodeSpec& producer_node(const GraphIndex& index, const std::string& tensor) {
  auto p = index.producer_of(tensor);
  if (!p) throw GraphError("tensor '" + tensor + "' has no producer");
  return index.graph().nodes[*p];
}

}  // namespace

RewriteConfig preset_config(std::string_view name) {
  RewriteConfig cfg;
  cfg.mode = RewriteMode::kSwap;
  if (name == "paper-c1") return cfg;
  if (name == "paper-c2") {
    cfg.n_tensors = 500;
    return cfg;
  }
  cfg.excl_scopes = {"synthesis/*"};
  if (name == "paper-c3") return cfg;
  if (name == "paper-c4") {
    cfg.lb = 20;
    return cfg;
  }
  throw GraphError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"paper-c1", "paper-c2", "paper-c3", "paper-c4"}; }

std::vector<std::string> swap_candidates(const TrainingGraph& tg, const RewriteConfig& cfg) {
  GraphIndex index(tg.graph);
  auto depths = bfs_depths(tg.graph);
  std::vector<std::tuple<int, std::string, std::string>> keyed;
  for (const auto& [tensor, _] : backward_consumers(tg)) {
    const auto& producer = producer_node(index, tensor);
    if (!cfg.incl_scopes.empty() && !scope_matches_any(cfg.incl_scopes, producer.scope)) continue;
    if (scope_matches_any(cfg.excl_scopes, producer.scope)) continue;
    keyed.emplace_back(depths.at(producer.id), producer.id, tensor);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::get<2>(k));
  return out;
}

std::vector<std::string> select_swap_tensors(const TrainingGraph& tg, const RewriteConfig& cfg) {
  cfg.validate();
  if (cfg.mode != RewriteMode::kSwap) throw GraphError("swap selection requires mode 'swap'");
  auto candidates = swap_candidates(tg, cfg);
  if (cfg.n_tensors >= 0 && static_cast<std::size_t>(cfg.n_tensors) < candidates.size()) {
    candidates.resize(static_cast<std::size_t>(cfg.n_tensors));
  }
  return candidates;
}

RewriteResult insert_swap_nodes(const TrainingGraph& tg, const std::vector<std::string>& selection, int lb) {
  if (lb < 1) throw GraphError("lb must be at least 1");
  GraphIndex index(tg.graph);
  auto pos = positions(tg);
  auto consumers = backward_consumers(tg);
  const std::size_t first_bwd = tg.first_backward_position();

  GraphSpec g = tg.graph;
  RewritePlan plan;
  plan.mode = RewriteMode::kSwap;
  plan.lb = lb;
  std::unordered_map<std::string, std::unordered_map<std::string, std::string>> rewire;  // node -> old -> new
  std::set<std::string> done;

  for (const auto& t : selection) {
    if (!done.insert(t).second) continue;
    auto c = consumers.find(t);
    if (c == consumers.end()) throw GraphError("tensor '" + t + "' is not read by the backward phase");
    const auto& desc = index.tensor_at(t);
    const auto& producer = producer_node(index, t);
    std::size_t earliest = pos.size();
    std::string earliest_id;
    for (const auto& id : c->second) {
      if (pos.at(id) < earliest) {
        earliest = pos.at(id);
        earliest_id = id;
      }
    }
    const auto need = static_cast<std::int64_t>(earliest);
    auto trigger = std::max({need - lb, static_cast<std::int64_t>(first_bwd),
                             static_cast<std::int64_t>(pos.at(producer.id)) + 1});
    if (trigger >= need) trigger = need - 1;
    const auto& trigger_id = tg.serial_order[static_cast<std::size_t>(trigger)];

    SwapEntry entry{t, "swap_out/" + t, "swap_in/" + t, trigger_id};
    const std::string host = "host/" + t;
    const std::string copy = "swapin/" + t;

    NodeSpec out;
    out.id = entry.swap_out;
    out.kind = NodeKind::kSwapOut;
    out.phase = Phase::kIo;
    out.scope = desc.scope;
    out.inputs = {t};
    out.outputs = {host};
    NodeSpec in;
    in.id = entry.swap_in;
    in.kind = NodeKind::kSwapIn;
    in.phase = Phase::kIo;
    in.scope = desc.scope;
    in.inputs = {host};
    in.outputs = {copy};
    TensorDesc host_desc = desc;
    host_desc.id = host;
    host_desc.producer = out.id;
    TensorDesc copy_desc = desc;
    copy_desc.id = copy;
    copy_desc.producer = in.id;

    g.nodes.push_back(std::move(out));
    g.nodes.push_back(std::move(in));
    g.tensors.push_back(std::move(host_desc));
    g.tensors.push_back(std::move(copy_desc));
    g.control_edges.push_back({trigger_id, entry.swap_in});
    for (const auto& id : c->second) rewire[id][t] = copy;
    plan.swapped.push_back(std::move(entry));
  }

  for (auto& n : g.nodes) {
    auto r = rewire.find(n.id);
    if (r == rewire.end()) continue;
    for (auto& in : n.inputs) {
      auto m = r->second.find(in);
      if (m != r->second.end()) in = m->second;
    }
  }
  return {make_training_graph(canonicalize(std::move(g)), tg.serial_order), std::move(plan)};
}

std::vector<std::string> plan_checkpoints(const TrainingGraph& tg, const RewriteConfig& cfg) {
  if (cfg.mode != RewriteMode::kRecompute) throw GraphError("checkpoint planning requires mode 'recompute'");
  GraphIndex index(tg.graph);
  auto pos = positions(tg);
  auto consumers = backward_consumers(tg);

  std::vector<std::pair<std::size_t, std::string>> ordered;
  for (const auto& [t, _] : consumers) ordered.emplace_back(pos.at(producer_node(index, t).id), t);
  std::sort(ordered.begin(), ordered.end());

  std::set<std::string> chosen;
  switch (cfg.ckpt_policy) {
    case CheckpointPolicy::kSpeed:
      for (const auto& [_, t] : ordered) {
        auto kind = producer_node(index, t).kind;
        if (kind == NodeKind::kConv || kind == NodeKind::kMatmul) chosen.insert(t);
      }
      break;
    case CheckpointPolicy::kSqrtN: {
      const auto stride = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(ordered.size()))));
      for (std::size_t i = 0; stride > 0 && i < ordered.size(); ++i) {
        if ((i + 1) % stride == 0) chosen.insert(ordered[i].second);
      }
      break;
    }
    case CheckpointPolicy::kManual:
      for (const auto& t : cfg.manual_ckpts) {
        if (!index.tensor(t)) throw GraphError("manual checkpoint names unknown tensor '" + t + "'");
        if (!consumers.contains(t)) throw GraphError("manual checkpoint '" + t + "' is not read by the backward phase");
        chosen.insert(t);
      }
      break;
  }
  for (const auto& n : tg.graph.nodes) {
    if (n.kind != NodeKind::kLoss || n.phase != Phase::kForward) continue;
    for (const auto& in : n.inputs) {
      if (consumers.contains(in)) chosen.insert(in);
    }
  }

  std::vector<std::string> out;
  for (const auto& [_, t] : ordered) {
    if (chosen.contains(t)) out.push_back(t);
  }
  return out;
}

RewriteResult insert_recompute(const TrainingGraph& tg, const std::vector<std::string>& checkpoints) {
  GraphIndex index(tg.graph);
  auto consumers = backward_consumers(tg);
  std::set<std::string> kept;
  for (const auto& c : checkpoints) {
    if (!consumers.contains(c)) throw GraphError("checkpoint '" + c + "' is not read by the backward phase");
    kept.insert(c);
  }

  GraphSpec g = tg.graph;
  RewritePlan plan;
  plan.mode = RewriteMode::kRecompute;
  plan.checkpoints = checkpoints;

  std::unordered_map<std::string, std::string> clone_of;  // original tensor -> clone tensor
  std::vector<NodeSpec> clones;
  std::vector<TensorDesc> clone_tensors;
  std::string segment_checkpoint;
  std::vector<std::string> segment_nodes;

  std::function<std::string(const std::string&)> materialize = [&](const std::string& t) -> std::string {
    if (kept.contains(t)) {
      if (segment_checkpoint.empty()) segment_checkpoint = t;
      return t;
    }
    if (auto it = clone_of.find(t); it != clone_of.end()) return it->second;
    const auto& producer = producer_node(index, t);
    if (producer.phase != Phase::kForward || producer.kind == NodeKind::kLoss) {
      throw GraphError("cannot re-materialize '" + t + "': no preceding checkpoint or graph input");
    }
    NodeSpec clone = producer;
    clone.id = "recompute/" + producer.id;
    clone.phase = Phase::kBackward;
    clone.origin = producer.id;
    for (auto& in : clone.inputs) in = materialize(in);
    for (auto& o : clone.outputs) {
      TensorDesc d = index.tensor_at(o);
      d.id = "recompute/" + o;
      d.producer = clone.id;
      clone_of.emplace(o, d.id);
      o = d.id;
      clone_tensors.push_back(std::move(d));
    }
    segment_nodes.push_back(producer.id);
    clones.push_back(std::move(clone));
    return clone_of.at(t);
  };

  std::unordered_map<std::string, std::size_t> node_at;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) node_at.emplace(g.nodes[i].id, i);
  std::vector<std::string> serial;
  for (const auto& id : tg.serial_order) {
    auto& node = g.nodes[node_at.at(id)];
    if (node.phase == Phase::kBackward) {
      const std::size_t before = clones.size();
      segment_checkpoint.clear();
      segment_nodes.clear();
      for (auto& in : node.inputs) {
        if (consumers.contains(in) && !kept.contains(in)) in = materialize(in);
      }
      for (std::size_t i = before; i < clones.size(); ++i) serial.push_back(clones[i].id);
      if (!segment_nodes.empty()) plan.recompute_segments.push_back({segment_checkpoint, node.id, segment_nodes});
    }
    serial.push_back(id);
  }
  g.nodes.insert(g.nodes.end(), clones.begin(), clones.end());
  g.tensors.insert(g.tensors.end(), clone_tensors.begin(), clone_tensors.end());
  return {make_training_graph(canonicalize(std::move(g)), std::move(serial)), std::move(plan)};
}

RewriteResult apply_rewrite(const TrainingGraph& tg, const RewriteConfig& cfg) {
  cfg.validate();
  switch (cfg.mode) {
    case RewriteMode::kSwap: {
      auto result = insert_swap_nodes(tg, select_swap_tensors(tg, cfg), cfg.lb);
      return result;
    }
    case RewriteMode::kRecompute: {
      auto result = insert_recompute(tg, plan_checkpoints(tg, cfg));
      result.plan.lb = cfg.lb;
      return result;
    }
    case RewriteMode::kNone:
      break;
  }
  RewritePlan plan;
  plan.lb = cfg.lb;
  return {tg, plan};
}

ValidationReport check_rewrite_validity(const TrainingGraph& original, const TrainingGraph& rewritten,
                                        const RewritePlan& plan) {
  ValidationReport report = validate_graph(rewritten.graph);
  auto add = [&](std::string_view kind, std::string detail) {
    report.push_back({std::string(kind), std::move(detail)});
  };
  GraphIndex before(original.graph);
  GraphIndex after(rewritten.graph);

  for (const auto& n : original.graph.nodes) {
    if (n.is_io()) continue;
    auto m = after.node(n.id);
    if (!m) {
      add(kMissingNode, "compute node '" + n.id + "' was removed");
    } else if (rewritten.graph.nodes[*m].kind != n.kind || rewritten.graph.nodes[*m].cost_units != n.cost_units) {
      add(kMissingNode, "compute node '" + n.id + "' changed kind or cost");
    }
  }

  auto consumers = backward_consumers(original);
  for (const auto& s : plan.swapped) {
    // The consumer must read the output of s.swap_in, which must read the
    // output of s.swap_out, which must read the original tensor.
    std::optional<std::string> copy;
    auto in = after.node(s.swap_in);
    if (in) {
      const auto& swap_in = rewritten.graph.nodes[*in];
      auto out = swap_in.inputs.size() == 1 ? after.producer_of(swap_in.inputs.front()) : std::nullopt;
      if (out && rewritten.graph.nodes[*out].id == s.swap_out &&
          rewritten.graph.nodes[*out].inputs == std::vector<std::string>{s.tensor} && swap_in.outputs.size() == 1) {
        copy = swap_in.outputs.front();
      }
      if (!std::count(rewritten.graph.control_edges.begin(), rewritten.graph.control_edges.end(),
                      ControlEdge{s.trigger, s.swap_in})) {
        add(kMissingTrigger, "swap_in '" + s.swap_in + "' has no control edge from '" + s.trigger + "'");
      }
    }
    auto c = consumers.find(s.tensor);
    if (c == consumers.end()) continue;
    for (const auto& id : c->second) {
      auto m = after.node(id);
      if (!m) continue;
      const auto& inputs = rewritten.graph.nodes[*m].inputs;
      bool via_copy = copy && std::find(inputs.begin(), inputs.end(), *copy) != inputs.end();
      bool direct = std::find(inputs.begin(), inputs.end(), s.tensor) != inputs.end();
      if (!via_copy || direct) {
        add(kBypassesSwapIn, "'" + id + "' reads '" + s.tensor + "' without going through '" + s.swap_in + "'");
      }
    }
  }

  for (const auto& n : rewritten.graph.nodes) {
    if (n.origin.empty() || n.kind == NodeKind::kGrad) continue;
    auto o = before.node(n.origin);
    if (!o) {
      add(kCloneMismatch, "clone '" + n.id + "' of unknown node '" + n.origin + "'");
      continue;
    }
    const auto& orig = original.graph.nodes[*o];
    if (orig.kind != n.kind || orig.cost_units != n.cost_units || orig.inputs.size() != n.inputs.size()) {
      add(kCloneMismatch, "clone '" + n.id + "' does not match '" + orig.id + "'");
    }
  }
  return report;
}

}  // namespace swapsim
