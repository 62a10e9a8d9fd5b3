// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used by tests and `swapsim verify`.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swapsim/sim.hpp"
#include "swapsim/train_expand.hpp"

namespace swapsim::oracles {

// Scans every serial position and sums the bytes of every device tensor alive
// there, by direct membership test. io nodes sit at producer + 1 (swap_out)
// or just after their control predecessor (swap_in).
struct PeakScan {
  std::uint64_t peak_bytes = 0;          // includes static bytes
  std::uint64_t feature_map_peak_bytes = 0;
};
PeakScan brute_force_peak(const TrainingGraph& tg);

// Minimum makespan over every ordering of each copy channel's transfers that
// respects FIFO (a transfer never precedes one issued strictly earlier).
// Times follow from a longest-path recursion over the fixed compute order.
// Unconstrained memory only; throws std::invalid_argument when a channel holds
// more than max_per_channel transfers.
double fifo_schedule_oracle(const TrainingGraph& tg, const SimConfig& cfg, std::size_t max_per_channel = 4);

// Violations found in a report; empty when sound.
std::vector<std::string> check_dependencies(const TrainingGraph& tg, const SimReport& r);
std::vector<std::string> check_channels_disjoint(const SimReport& r);
// Rebuilds residency from the event list (allocate at producer start, free at
// the end of the last consumer) and compares against peak_resident.
std::vector<std::string> check_memory(const TrainingGraph& tg, const SimConfig& cfg, const SimReport& r);
std::vector<std::string> check_swap_soundness(const TrainingGraph& tg, const SimReport& r);

}  // namespace swapsim::oracles
