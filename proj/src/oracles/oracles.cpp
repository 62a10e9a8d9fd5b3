// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/oracles/oracles.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace swapsim::oracles {
namespace {

std::uint64_t bytes_of(const TensorDesc& t) {
  std::uint64_t n = t.elem_bytes;
  for (auto d : t.shape) n *= static_cast<std::uint64_t>(d);
  return n * static_cast<std::uint64_t>(t.channels);
}

const NodeSpec& find_node(const GraphSpec& g, const std::string& id) {
  for (const auto& n : g.nodes) {
    if (n.id == id) return n;
  }
  throw std::invalid_argument("no node '" + id + "'");
}

const TensorDesc& find_tensor(const GraphSpec& g, const std::string& id) {
  for (const auto& t : g.tensors) {
    if (t.id == id) return t;
  }
  throw std::invalid_argument("no tensor '" + id + "'");
}

std::vector<std::string> preds_of(const GraphSpec& g, const NodeSpec& n) {
  std::set<std::string> out;
  for (const auto& in : n.inputs) out.insert(find_tensor(g, in).producer);
  for (const auto& e : g.control_edges) {
    if (e.to == n.id) out.insert(e.from);
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> consumers(const GraphSpec& g, const std::string& t) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes) {
    if (std::find(n.inputs.begin(), n.inputs.end(), t) != n.inputs.end()) out.push_back(n.id);
  }
  return out;
}

}  // namespace

PeakScan brute_force_peak(const TrainingGraph& tg) {
  const auto& g = tg.graph;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < tg.serial_order.size(); ++i) pos[tg.serial_order[i]] = i;
  // io positions; swap_out precedes its swap_in, so two passes suffice
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& n : g.nodes) {
      if (n.kind == NodeKind::kSwapOut) {
        pos[n.id] = std::min(pos.at(find_tensor(g, n.inputs.front()).producer) + 1, tg.serial_order.size() - 1);
      } else if (n.kind == NodeKind::kSwapIn) {
        for (const auto& e : g.control_edges) {
          if (e.to == n.id) pos[n.id] = std::min(pos.at(e.from) + 1, tg.serial_order.size() - 1);
        }
      }
    }
  }
  PeakScan out;
  for (std::size_t i = 0; i < tg.serial_order.size(); ++i) {
    std::uint64_t all = 0, fmap = 0;
    for (const auto& t : g.tensors) {
      const auto& producer = find_node(g, t.producer);
      if (producer.kind == NodeKind::kSwapOut) continue;
      std::size_t first = pos.at(producer.id), last = first;
      for (const auto& c : consumers(g, t.id)) last = std::max(last, pos.at(c));
      if (i < first || i > last) continue;
      all += bytes_of(t);
      if (producer.kind != NodeKind::kGrad && producer.kind != NodeKind::kLoss) fmap += bytes_of(t);
    }
    out.peak_bytes = std::max(out.peak_bytes, all);
    out.feature_map_peak_bytes = std::max(out.feature_map_peak_bytes, fmap);
  }
  out.peak_bytes += tg.static_bytes();
  return out;
}

double fifo_schedule_oracle(const TrainingGraph& tg, const SimConfig& cfg, std::size_t max_per_channel) {
  const auto& g = tg.graph;
  std::vector<std::string> d2h, h2d;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kSwapOut) d2h.push_back(n.id);
    if (n.kind == NodeKind::kSwapIn) h2d.push_back(n.id);
  }
  if (d2h.size() > max_per_channel || h2d.size() > max_per_channel) {
    throw std::invalid_argument("too many transfers for exhaustive ordering");
  }
  std::map<std::string, double> dur;
  std::map<std::string, std::vector<std::string>> preds;
  for (const auto& n : g.nodes) {
    preds[n.id] = preds_of(g, n);
    if (n.kind == NodeKind::kSwapOut) {
      dur[n.id] = cfg.xfer_latency + static_cast<double>(bytes_of(find_tensor(g, n.inputs.front()))) / cfg.d2h_bw;
    } else if (n.kind == NodeKind::kSwapIn) {
      dur[n.id] = cfg.xfer_latency + static_cast<double>(bytes_of(find_tensor(g, n.outputs.front()))) / cfg.h2d_bw;
    } else {
      dur[n.id] = n.cost_units / cfg.compute_rate;
    }
  }

  std::sort(d2h.begin(), d2h.end());
  std::sort(h2d.begin(), h2d.end());
  double best = std::numeric_limits<double>::infinity();
  auto a = d2h;
  do {
    auto b = h2d;
    do {
      // channel predecessor of each node
      std::map<std::string, std::string> chain_prev;
      for (std::size_t i = 1; i < tg.serial_order.size(); ++i) chain_prev[tg.serial_order[i]] = tg.serial_order[i - 1];
      for (std::size_t i = 1; i < a.size(); ++i) chain_prev[a[i]] = a[i - 1];
      for (std::size_t i = 1; i < b.size(); ++i) chain_prev[b[i]] = b[i - 1];

      std::map<std::string, double> end, issue;
      bool progress = true;
      while (progress && end.size() < g.nodes.size()) {
        progress = false;
        for (const auto& n : g.nodes) {
          if (end.contains(n.id)) continue;
          bool ready = true;
          double start = 0, iss = 0;
          for (const auto& p : preds[n.id]) {
            auto it = end.find(p);
            if (it == end.end()) {
              ready = false;
              break;
            }
            start = std::max(start, it->second);
            if (!find_node(g, p).is_io()) iss = std::max(iss, it->second);
          }
          if (auto cp = chain_prev.find(n.id); ready && cp != chain_prev.end()) {
            auto it = end.find(cp->second);
            if (it == end.end()) ready = false;
            else start = std::max(start, it->second);
          }
          if (!ready) continue;
          end[n.id] = start + dur[n.id];
          issue[n.id] = iss;
          progress = true;
        }
      }
      if (end.size() < g.nodes.size()) continue;  // cyclic wait: not a schedule
      bool fifo = true;
      for (const auto* q : {&a, &b}) {
        for (std::size_t i = 1; i < q->size(); ++i) {
          if (issue[(*q)[i - 1]] > issue[(*q)[i]]) fifo = false;
        }
      }
      if (!fifo) continue;
      double makespan = 0;
      for (const auto& [_, e] : end) makespan = std::max(makespan, e);
      best = std::min(best, makespan);
    } while (std::next_permutation(b.begin(), b.end()));
  } while (std::next_permutation(a.begin(), a.end()));
  return best;
}

std::vector<std::string> check_dependencies(const TrainingGraph& tg, const SimReport& r) {
  std::vector<std::string> bad;
  std::map<std::string, const SimEvent*> ev;
  for (const auto& e : r.events) ev[e.node] = &e;
  for (const auto& n : tg.graph.nodes) {
    auto it = ev.find(n.id);
    if (it == ev.end()) {
      bad.push_back("node '" + n.id + "' never ran");
      continue;
    }
    for (const auto& p : preds_of(tg.graph, n)) {
      auto pe = ev.find(p);
      if (pe != ev.end() && pe->second->end > it->second->start) {
        bad.push_back("'" + n.id + "' starts before '" + p + "' ends");
      }
    }
  }
  return bad;
}

std::vector<std::string> check_channels_disjoint(const SimReport& r) {
  std::vector<std::string> bad;
  std::map<Channel, std::vector<const SimEvent*>> by;
  for (const auto& e : r.events) by[e.channel].push_back(&e);
  for (auto& [c, list] : by) {
    std::sort(list.begin(), list.end(), [](auto* x, auto* y) {
      return std::tie(x->start, x->end) < std::tie(y->start, y->end);
    });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->start < list[i - 1]->end) {
        bad.push_back("'" + list[i]->node + "' overlaps '" + list[i - 1]->node + "' on " + std::string(to_string(c)));
      }
    }
  }
  return bad;
}

std::vector<std::string> check_memory(const TrainingGraph& tg, const SimConfig& cfg, const SimReport& r) {
  const auto& g = tg.graph;
  std::map<std::string, const SimEvent*> ev;
  for (const auto& e : r.events) ev[e.node] = &e;
  std::map<std::string, std::size_t> serial;
  for (std::size_t i = 0; i < tg.serial_order.size(); ++i) serial[tg.serial_order[i]] = i;

  // Within one instant: releases by work that was already running, then the
  // compute channel in serial order (a zero-length op allocates and releases
  // on the spot), then transfer starts.
  using Key = std::tuple<double, int, std::size_t, int>;
  std::vector<std::pair<Key, std::int64_t>> deltas;
  auto release_key = [&](const SimEvent& by) -> Key {
    if (by.start == by.end && by.channel == Channel::kCompute) return {by.end, 1, serial.at(by.node), 1};
    return {by.end, 0, 0, 0};
  };
  auto alloc_key = [&](const SimEvent& by) -> Key {
    if (by.channel == Channel::kCompute) return {by.start, 1, serial.at(by.node), 0};
    return {by.start, 2, 0, 0};
  };
  for (const auto& t : g.tensors) {
    const auto& producer = find_node(g, t.producer);
    if (producer.kind == NodeKind::kSwapOut) continue;
    const auto b = static_cast<std::int64_t>(bytes_of(t));
    const SimEvent* made = ev.at(producer.id);
    deltas.push_back({alloc_key(*made), b});
    const SimEvent* last = made;
    for (const auto& c : consumers(g, t.id)) {
      const SimEvent* e = ev.at(c);
      if (release_key(*e) > release_key(*last)) last = e;
    }
    deltas.push_back({release_key(*last), -b});
  }
  std::stable_sort(deltas.begin(), deltas.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  const auto base = static_cast<std::int64_t>(cfg.static_bytes.value_or(tg.static_bytes()));
  std::int64_t cur = base, peak = base;
  std::vector<std::string> bad;
  for (const auto& [key, d] : deltas) {
    cur += d;
    if (cur < base) bad.push_back("negative residency at t=" + std::to_string(std::get<0>(key)));
    peak = std::max(peak, cur);
  }
  if (static_cast<std::uint64_t>(peak) != r.peak_resident) {
    bad.push_back("peak_resident " + std::to_string(r.peak_resident) + " != event-derived " + std::to_string(peak));
  }
  if (cfg.enforce_budget && cfg.gpu_budget > 0 && r.peak_resident > cfg.gpu_budget) {
    bad.push_back("peak_resident exceeds budget");
  }
  return bad;
}

std::vector<std::string> check_swap_soundness(const TrainingGraph& tg, const SimReport& r) {
  const auto& g = tg.graph;
  std::map<std::string, const SimEvent*> ev;
  for (const auto& e : r.events) ev[e.node] = &e;
  std::vector<std::string> bad;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kSwapOut) {
      const auto& producer = find_tensor(g, n.inputs.front()).producer;
      if (ev.at(n.id)->start < ev.at(producer)->end) bad.push_back("'" + n.id + "' starts before its producer ends");
    } else if (n.kind == NodeKind::kSwapIn) {
      for (const auto& c : consumers(g, n.outputs.front())) {
        if (ev.at(n.id)->end > ev.at(c)->start) bad.push_back("'" + n.id + "' finishes after '" + c + "' starts");
      }
    }
  }
  return bad;
}

}  // namespace swapsim::oracles
