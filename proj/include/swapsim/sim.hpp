// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "swapsim/graph.hpp"
#include "swapsim/plan.hpp"
#include "swapsim/train_expand.hpp"

namespace swapsim {

class SimError : public std::runtime_error {
 public:
  enum class Kind { kInfeasible, kDeadlock, kConfig };
  SimError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Trace thread ids: 0 compute, 1 device-to-host, 2 host-to-device.
enum class Channel { kCompute = 0, kD2H = 1, kH2D = 2 };
std::string_view to_string(Channel c);

struct SimConfig {
  double compute_rate = 1.0;  // cost_units per second
  double d2h_bw = 40e9;       // bytes per second
  double h2d_bw = 40e9;
  double xfer_latency = 0.0;  // seconds per transfer
  std::uint64_t gpu_budget = 0;  // 0 = unlimited
  // Overrides the graph's static_bytes metadata when set.
  std::optional<std::uint64_t> static_bytes;
  bool enforce_budget = false;

  void validate() const;
};

// NVLink 1.0 (80 GB/s bidirectional, 40 GB/s each way) and PCIe 3.0 x16
// (32 GB/s bidirectional, 16 GB/s each way).
SimConfig link_preset(std::string_view name);

struct SimEvent {
  std::string node;
  Channel channel = Channel::kCompute;
  double start = 0;
  double end = 0;
};

enum class StallPhase { kForward, kBoundary, kBackward };
std::string_view to_string(StallPhase p);

struct Stall {
  std::string waiting_node;
  // The dependency that finished last (usually a transfer), or "memory".
  std::string blocking;
  double start = 0;
  double duration = 0;
  StallPhase phase = StallPhase::kForward;
};

struct SimReport {
  double makespan = 0;
  std::vector<SimEvent> events;  // sorted by (start, channel, node)
  std::uint64_t peak_resident = 0;
  std::vector<Stall> stalls;
  std::array<double, 3> busy_fraction{};
};

double op_cost(const NodeSpec& n, const SimConfig& cfg);
double xfer_cost(std::uint64_t bytes, double bw, double latency);

// Runs one training iteration of a (possibly rewritten) graph. The compute
// channel executes serial_order in order. Each copy channel is an in-order
// queue: a transfer is enqueued when its last compute predecessor finishes
// (swap_out: the producer, swap_in: the trigger) and starts once it is at the
// head and every dependency is met. Same-instant enqueues are ordered by the
// serial position of the transfer's first consumer, then node id.
//
// Memory: outputs are allocated at node start and a device tensor is freed
// once all of its consumers have finished.
//
// Throws SimError (kInfeasible) if a single tensor cannot fit the budget, and
// (kDeadlock) when nothing can make progress under the budget.
SimReport simulate(const TrainingGraph& tg, const SimConfig& cfg);

struct StallTotals {
  double forward = 0;
  double boundary = 0;
  double backward = 0;

  double total() const { return forward + boundary + backward; }
};

// The boundary bucket holds the idle time right before the first backward
// node.
StallTotals stall_report(const SimReport& r);

// Busy seconds on the compute channel.
double compute_busy(const SimReport& r);

std::string trace_json(const SimReport& r);
void emit_trace(const SimReport& r, const std::filesystem::path& path);
nlohmann::json report_to_json(const SimReport& r);

// Host preprocessing overlaps device work, so the slower of the two sets the
// pace. Throws SimError for iterations < 1.
double epoch_time(double iter_seconds, int iterations, double host_preproc_seconds);

// Finds the compute_rate at which `tg` takes `target_seconds` per iteration.
double calibrate_compute_rate(const TrainingGraph& tg, SimConfig cfg, double target_seconds);

struct SweepCell {
  std::string label;  // preset name, or "custom"
  RewriteConfig rewrite;
  double bw = 40e9;   // applied to both directions
};

struct SweepRow {
  std::string label;
  RewriteMode mode = RewriteMode::kNone;
  int n_tensors = -1;
  int lb = 1;
  double bw = 0;
  std::size_t swapped = 0;
  std::size_t recompute_nodes = 0;
  std::uint64_t static_peak = 0;
  double makespan = 0;
  std::uint64_t peak_resident = 0;
  StallTotals stalls;
  std::string error;  // non-empty when the cell failed
};

// Rewrites and simulates every cell of the grid (cells run concurrently).
// Rows come back sorted by (label, mode, n_tensors, lb, bw). A failing cell
// records its error and the sweep continues. Throws SimError on an empty grid.
std::vector<SweepRow> sweep(const TrainingGraph& forward_expanded, const std::vector<SweepCell>& grid,
                            const SimConfig& base);

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);
std::string sweep_to_text(const std::vector<SweepRow>& rows);

}  // namespace swapsim
