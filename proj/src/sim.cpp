// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <future>
#include <limits>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "swapsim/graph_io.hpp"
#include "swapsim/rewrite.hpp"

namespace swapsim {
namespace {

constexpr double kNever = -1.0;

Channel channel_of(const NodeSpec& n) {
  if (n.kind == NodeKind::kSwapOut) return Channel::kD2H;
  if (n.kind == NodeKind::kSwapIn) return Channel::kH2D;
  return Channel::kCompute;
}

class Simulator {
 public:
  Simulator(const TrainingGraph& tg, const SimConfig& cfg)
      : tg_(tg), g_(tg.graph), index_(tg.graph), cfg_(cfg) {
    const std::size_t n = g_.nodes.size();
    end_.assign(n, kNever);
    done_.assign(n, false);
    start_.assign(n, kNever);
    serial_pos_.assign(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < tg.serial_order.size(); ++i) {
      serial_.push_back(*index_.node(tg.serial_order[i]));
      serial_pos_[serial_.back()] = i;
    }
    first_backward_ = std::numeric_limits<std::size_t>::max();
    for (auto s : serial_) {
      if (g_.nodes[s].phase == Phase::kBackward) {
        first_backward_ = s;
        break;
      }
    }
    device_.assign(g_.tensors.size(), false);
    on_device_.assign(g_.tensors.size(), false);
    bytes_.resize(g_.tensors.size());
    pending_consumers_.resize(g_.tensors.size());
    for (std::size_t t = 0; t < g_.tensors.size(); ++t) {
      bytes_[t] = tensor_bytes(g_.tensors[t]);
      pending_consumers_[t] = index_.consumers_of(g_.tensors[t].id).size();
      auto p = index_.producer_of(g_.tensors[t].id);
      on_device_[t] = p && g_.nodes[*p].kind != NodeKind::kSwapOut;
    }
    compute_preds_left_.resize(n);
    need_pos_.assign(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < n; ++i) {
      for (auto p : index_.preds(i)) {
        if (!g_.nodes[p].is_io()) ++compute_preds_left_[i];
      }
      if (g_.nodes[i].is_io()) {
        for (const auto& out : g_.nodes[i].outputs) {
          for (auto c : index_.consumers_of(out)) need_pos_[i] = std::min(need_pos_[i], serial_pos_[c]);
        }
        if (g_.nodes[i].kind == NodeKind::kSwapOut) {
          for (auto p : index_.preds(i)) need_pos_[i] = std::min(need_pos_[i], serial_pos_[p]);
        }
      }
    }
    static_bytes_ = cfg.static_bytes.value_or(tg.static_bytes());
  }

  SimReport run() {
    check_feasible();
    resident_ = static_bytes_;
    report_.peak_resident = resident_;
    std::vector<std::size_t> issued;
    for (std::size_t i = 0; i < g_.nodes.size(); ++i) {
      if (g_.nodes[i].is_io() && compute_preds_left_[i] == 0) issued.push_back(i);
    }
    enqueue(issued);

    double now = 0;
    while (true) {
      dispatch(now);
      std::optional<double> next;
      for (const auto& r : running_) {
        if (r) next = next ? std::min(*next, end_[*r]) : end_[*r];
      }
      if (!next) break;
      now = *next;
      issued.clear();
      for (auto& r : running_) {
        if (r && end_[*r] == now) {
          complete(*r, issued);
          r.reset();
        }
      }
      enqueue(issued);
    }
    if (next_compute_ < serial_.size() || !queues_[1].empty() || !queues_[2].empty()) deadlock(now);

    report_.makespan = now;
    std::array<double, 3> busy{};
    for (const auto& e : report_.events) busy[static_cast<std::size_t>(e.channel)] += e.end - e.start;
    for (std::size_t c = 0; c < 3; ++c) report_.busy_fraction[c] = now > 0 ? busy[c] / now : 0.0;
    std::sort(report_.events.begin(), report_.events.end(), [](const SimEvent& a, const SimEvent& b) {
      return std::tie(a.start, a.channel, a.node) < std::tie(b.start, b.channel, b.node);
    });
    return std::move(report_);
  }

 private:
  double duration(std::size_t n) const {
    const auto& node = g_.nodes[n];
    switch (node.kind) {
      case NodeKind::kSwapOut:
        return xfer_cost(bytes_[*index_.tensor(node.inputs.front())], cfg_.d2h_bw, cfg_.xfer_latency);
      case NodeKind::kSwapIn:
        return xfer_cost(bytes_[*index_.tensor(node.outputs.front())], cfg_.h2d_bw, cfg_.xfer_latency);
      default:
        return op_cost(node, cfg_);
    }
  }

  std::uint64_t alloc_bytes(std::size_t n) const {
    std::uint64_t total = 0;
    for (const auto& out : g_.nodes[n].outputs) {
      auto t = *index_.tensor(out);
      if (on_device_[t]) total += bytes_[t];
    }
    return total;
  }

  bool deps_done(std::size_t n) const {
    for (auto p : index_.preds(n)) {
      if (!done_[p]) return false;
    }
    return true;
  }

  bool fits(std::uint64_t bytes) const {
    return !cfg_.enforce_budget || cfg_.gpu_budget == 0 || resident_ + bytes <= cfg_.gpu_budget;
  }

  void check_feasible() const {
    if (!cfg_.enforce_budget || cfg_.gpu_budget == 0) return;
    for (std::size_t t = 0; t < g_.tensors.size(); ++t) {
      if (on_device_[t] && static_bytes_ + bytes_[t] > cfg_.gpu_budget) {
        throw SimError(SimError::Kind::kInfeasible,
                       "infeasible: tensor '" + g_.tensors[t].id + "' needs " + std::to_string(bytes_[t]) +
                           " bytes on top of " + std::to_string(static_bytes_) + " static bytes; budget is " +
                           std::to_string(cfg_.gpu_budget));
      }
    }
  }

  [[noreturn]] void deadlock(double now) const {
    std::ostringstream msg;
    msg << "deadlock at t=" << now << "s with " << resident_ << " of " << cfg_.gpu_budget
        << " budget bytes resident; waiting:";
    if (next_compute_ < serial_.size()) {
      auto n = serial_[next_compute_];
      msg << " compute '" << g_.nodes[n].id << "' (needs " << alloc_bytes(n) << " bytes)";
    }
    for (std::size_t c = 1; c < 3; ++c) {
      if (!queues_[c].empty()) msg << " " << to_string(static_cast<Channel>(c)) << " '" << g_.nodes[queues_[c].front()].id << "'";
    }
    msg << "; resident tensors cannot be released before these nodes run";
    throw SimError(SimError::Kind::kDeadlock, msg.str());
  }

  void start(std::size_t n, Channel c, double now) {
    auto bytes = alloc_bytes(n);
    resident_ += bytes;
    report_.peak_resident = std::max(report_.peak_resident, resident_);
    for (const auto& out : g_.nodes[n].outputs) {
      auto t = *index_.tensor(out);
      if (on_device_[t]) device_[t] = true;
    }
    start_[n] = now;
    end_[n] = now + duration(n);
    running_[static_cast<std::size_t>(c)] = n;
  }

  void dispatch(double now) {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      // Zero-length compute ops finish on the spot, so the channel can take
      // several in one instant.
      while (!running_[0] && next_compute_ < serial_.size()) {
        auto n = serial_[next_compute_];
        if (!deps_done(n)) break;
        if (!fits(alloc_bytes(n))) {
          memory_blocked_ = true;
          break;
        }
        record_stall(n, now);
        start(n, Channel::kCompute, now);
        ++next_compute_;
        progressed = true;
        if (end_[n] == now) {
          std::vector<std::size_t> issued;
          complete(n, issued);
          running_[0].reset();
          enqueue(issued);
        }
      }
      for (std::size_t c = 1; c < 3; ++c) {
        if (running_[c] || queues_[c].empty()) continue;
        auto n = queues_[c].front();
        if (!deps_done(n) || !fits(alloc_bytes(n))) continue;
        queues_[c].pop_front();
        start(n, static_cast<Channel>(c), now);
        progressed = true;
      }
    }
  }

  void record_stall(std::size_t n, double now) {
    const double gap = now - last_compute_end_;
    const bool was_memory = memory_blocked_;
    memory_blocked_ = false;
    if (gap <= 0) return;
    Stall s;
    s.waiting_node = g_.nodes[n].id;
    s.start = last_compute_end_;
    s.duration = gap;
    if (was_memory) {
      s.blocking = "memory";
    } else {
      double latest = kNever;
      for (auto p : index_.preds(n)) {
        if (end_[p] > latest) {
          latest = end_[p];
          s.blocking = g_.nodes[p].id;
        }
      }
    }
    if (n == first_backward_) {
      s.phase = StallPhase::kBoundary;
    } else {
      s.phase = g_.nodes[n].phase == Phase::kBackward ? StallPhase::kBackward : StallPhase::kForward;
    }
    report_.stalls.push_back(std::move(s));
  }

  void release(std::size_t t) {
    if (on_device_[t] && device_[t]) {
      resident_ -= bytes_[t];
      device_[t] = false;
    }
  }

  void complete(std::size_t n, std::vector<std::size_t>& issued) {
    const auto& node = g_.nodes[n];
    done_[n] = true;
    report_.events.push_back({node.id, channel_of(node), start_[n], end_[n]});
    if (!node.is_io()) last_compute_end_ = end_[n];
    for (const auto& in : node.inputs) {
      auto t = *index_.tensor(in);
      if (--pending_consumers_[t] == 0) release(t);
    }
    for (const auto& out : node.outputs) {
      auto t = *index_.tensor(out);
      if (pending_consumers_[t] == 0) release(t);
    }
    if (node.is_io()) return;
    for (auto s : index_.succs(n)) {
      if (g_.nodes[s].is_io() && --compute_preds_left_[s] == 0) issued.push_back(s);
    }
  }

  void enqueue(std::vector<std::size_t>& issued) {
    std::sort(issued.begin(), issued.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(need_pos_[a], g_.nodes[a].id) < std::tie(need_pos_[b], g_.nodes[b].id);
    });
    for (auto n : issued) queues_[static_cast<std::size_t>(channel_of(g_.nodes[n]))].push_back(n);
  }

  const TrainingGraph& tg_;
  const GraphSpec& g_;
  GraphIndex index_;
  const SimConfig& cfg_;

  std::vector<std::size_t> serial_;
  std::vector<std::size_t> serial_pos_;
  std::size_t first_backward_ = 0;
  std::vector<double> start_, end_;
  std::vector<bool> done_;
  std::vector<std::size_t> compute_preds_left_;
  std::vector<std::size_t> need_pos_;
  std::vector<std::uint64_t> bytes_;
  std::vector<std::size_t> pending_consumers_;
  std::vector<bool> on_device_;
  std::vector<bool> device_;
  std::uint64_t static_bytes_ = 0;
  std::uint64_t resident_ = 0;

  std::size_t next_compute_ = 0;
  double last_compute_end_ = 0;
  bool memory_blocked_ = false;
  std::array<std::optional<std::size_t>, 3> running_;
  std::array<std::deque<std::size_t>, 3> queues_;
  SimReport report_;
};

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

}  // namespace

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::kCompute:
      return "compute";
    case Channel::kD2H:
      return "d2h";
    case Channel::kH2D:
      return "h2d";
  }
  return "unknown";
}

std::string_view to_string(StallPhase p) {
  switch (p) {
    case StallPhase::kForward:
      return "forward";
    case StallPhase::kBoundary:
      return "boundary";
    case StallPhase::kBackward:
      return "backward";
  }
  return "unknown";
}

void SimConfig::validate() const {
  if (!(compute_rate > 0)) throw SimError(SimError::Kind::kConfig, "compute_rate must be positive");
  if (!(d2h_bw > 0) || !(h2d_bw > 0)) throw SimError(SimError::Kind::kConfig, "bandwidths must be positive");
  if (!(xfer_latency >= 0)) throw SimError(SimError::Kind::kConfig, "latency must be non-negative");
}

SimConfig link_preset(std::string_view name) {
  SimConfig cfg;
  if (name == "nvlink1") {
    cfg.d2h_bw = cfg.h2d_bw = 40e9;
  } else if (name == "pcie3") {
    cfg.d2h_bw = cfg.h2d_bw = 16e9;
  } else {
    throw SimError(SimError::Kind::kConfig, "unknown link preset '" + std::string(name) + "'");
  }
  return cfg;
}

double op_cost(const NodeSpec& n, const SimConfig& cfg) {
  if (n.is_io()) return 0.0;
  return n.cost_units / cfg.compute_rate;
}

double xfer_cost(std::uint64_t bytes, double bw, double latency) {
  return latency + static_cast<double>(bytes) / bw;
}

SimReport simulate(const TrainingGraph& tg, const SimConfig& cfg) {
  cfg.validate();
  return Simulator(tg, cfg).run();
}

StallTotals stall_report(const SimReport& r) {
  StallTotals totals;
  for (const auto& s : r.stalls) {
    switch (s.phase) {
      case StallPhase::kForward:
        totals.forward += s.duration;
        break;
      case StallPhase::kBoundary:
        totals.boundary += s.duration;
        break;
      case StallPhase::kBackward:
        totals.backward += s.duration;
        break;
    }
  }
  return totals;
}

double compute_busy(const SimReport& r) {
  double busy = 0;
  for (const auto& e : r.events) {
    if (e.channel == Channel::kCompute) busy += e.end - e.start;
  }
  return busy;
}

std::string trace_json(const SimReport& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) {
    events.push_back({{"name", e.node},
                      {"ph", "X"},
                      {"ts", e.start * 1e6},
                      {"dur", (e.end - e.start) * 1e6},
                      {"pid", 0},
                      {"tid", static_cast<int>(e.channel)}});
  }
  return dump_document(events);
}

void emit_trace(const SimReport& r, const std::filesystem::path& path) { write_text_file(path, trace_json(r)); }

nlohmann::json report_to_json(const SimReport& r) {
  auto totals = stall_report(r);
  nlohmann::json stalls = nlohmann::json::array();
  for (const auto& s : r.stalls) {
    stalls.push_back({{"waiting_node", s.waiting_node},
                      {"blocking", s.blocking},
                      {"start", s.start},
                      {"duration", s.duration},
                      {"phase", to_string(s.phase)}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) {
    events.push_back({{"node", e.node}, {"channel", to_string(e.channel)}, {"start", e.start}, {"end", e.end}});
  }
  return {{"makespan", r.makespan},
          {"peak_resident", r.peak_resident},
          {"busy_fraction",
           {{"compute", r.busy_fraction[0]}, {"d2h", r.busy_fraction[1]}, {"h2d", r.busy_fraction[2]}}},
          {"stall_totals",
           {{"forward", totals.forward}, {"boundary", totals.boundary}, {"backward", totals.backward}}},
          {"stalls", std::move(stalls)},
          {"events", std::move(events)}};
}

double epoch_time(double iter_seconds, int iterations, double host_preproc_seconds) {
  if (iterations < 1) throw SimError(SimError::Kind::kConfig, "an epoch needs at least one iteration");
  return iterations * std::max(iter_seconds, host_preproc_seconds);
}

double calibrate_compute_rate(const TrainingGraph& tg, SimConfig cfg, double target_seconds) {
  if (!(target_seconds > 0)) throw SimError(SimError::Kind::kConfig, "calibration target must be positive");
  auto makespan = [&](double rate) {
    cfg.compute_rate = rate;
    return simulate(tg, cfg).makespan;
  };
  double total = 0;
  for (const auto& n : tg.graph.nodes) total += n.cost_units;
  if (total <= 0) throw SimError(SimError::Kind::kConfig, "graph has no compute cost to calibrate");
  // Makespan falls as the rate rises; bracket, then bisect in log space.
  double lo = total / target_seconds;  // compute alone would take exactly the target
  double hi = lo;
  if (makespan(lo) <= target_seconds) return lo;
  for (int i = 0; i < 200 && makespan(hi) > target_seconds; ++i) hi *= 2;
  if (makespan(hi) > target_seconds) {
    throw SimError(SimError::Kind::kConfig, "transfers alone exceed the calibration target");
  }
  for (int i = 0; i < 100 && hi / lo > 1 + 1e-12; ++i) {
    double mid = std::sqrt(lo * hi);
    (makespan(mid) > target_seconds ? lo : hi) = mid;
  }
  return hi;
}

std::vector<SweepRow> sweep(const TrainingGraph& base_graph, const std::vector<SweepCell>& grid, const SimConfig& base) {
  if (grid.empty()) throw SimError(SimError::Kind::kConfig, "sweep grid is empty");
  std::vector<std::future<SweepRow>> futures;
  futures.reserve(grid.size());
  for (const auto& cell : grid) {
    futures.push_back(std::async(std::launch::async, [&base_graph, &base, cell] {
      SweepRow row;
      row.label = cell.label;
      row.mode = cell.rewrite.mode;
      row.n_tensors = cell.rewrite.n_tensors;
      row.lb = cell.rewrite.lb;
      row.bw = cell.bw;
      try {
        auto rewritten = apply_rewrite(base_graph, cell.rewrite);
        row.swapped = rewritten.plan.swapped.size();
        for (const auto& s : rewritten.plan.recompute_segments) row.recompute_nodes += s.nodes.size();
        SimConfig cfg = base;
        cfg.d2h_bw = cfg.h2d_bw = cell.bw;
        row.static_peak = static_peak_estimate(rewritten.graph, &rewritten.plan).peak_bytes;
        auto report = simulate(rewritten.graph, cfg);
        row.makespan = report.makespan;
        row.peak_resident = report.peak_resident;
        row.stalls = stall_report(report);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      return row;
    }));
  }
  std::vector<SweepRow> rows;
  for (auto& f : futures) rows.push_back(f.get());
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.label, a.mode, a.n_tensors, a.lb, a.bw) < std::tie(b.label, b.mode, b.n_tensors, b.lb, b.bw);
  });
  return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"label", r.label},
                     {"mode", to_string(r.mode)},
                     {"n_tensors", r.n_tensors},
                     {"lb", r.lb},
                     {"bw", r.bw},
                     {"swapped", r.swapped},
                     {"recompute_nodes", r.recompute_nodes},
                     {"static_peak_bytes", r.static_peak},
                     {"makespan", r.makespan},
                     {"peak_resident", r.peak_resident},
                     {"stall_forward", r.stalls.forward},
                     {"stall_boundary", r.stalls.boundary},
                     {"stall_backward", r.stalls.backward}};
    if (!r.error.empty()) j["error"] = r.error;
    out.push_back(std::move(j));
  }
  return out;
}

std::string sweep_to_text(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-9s %9s %4s %9s %8s %12s %12s %12s %12s\n", "label", "mode",
                "n_tensors", "lb", "bw[GB/s]", "swapped", "makespan[s]", "boundary[s]", "backward[s]", "peak[GiB]");
  out << line;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      std::snprintf(line, sizeof line, "%-10s %-9s %9d %4d %9.1f  error: ", r.label.c_str(),
                    std::string(to_string(r.mode)).c_str(), r.n_tensors, r.lb, r.bw / 1e9);
      out << line << r.error << "\n";
      continue;
    }
    std::snprintf(line, sizeof line, "%-10s %-9s %9d %4d %9.1f %8zu %12s %12s %12s %12.3f\n", r.label.c_str(),
                  std::string(to_string(r.mode)).c_str(), r.n_tensors, r.lb, r.bw / 1e9, r.swapped,
                  format_seconds(r.makespan).c_str(), format_seconds(r.stalls.boundary).c_str(),
                  format_seconds(r.stalls.backward).c_str(),
                  static_cast<double>(r.peak_resident) / (1024.0 * 1024.0 * 1024.0));
    out << line;
  }
  return out.str();
}

}  // namespace swapsim
