// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "swapsim/graph.hpp"
#include "swapsim/plan.hpp"
#include "swapsim/train_expand.hpp"

namespace swapsim {

// "paper-c1" .. "paper-c4": the four swap tunings for 3D U-Net.
//   c1: n_tensors -1, lb 1          c2: n_tensors 500, lb 1
//   c3: n_tensors -1, lb 1, excl    c4: n_tensors -1, lb 20, excl
// where excl is "synthesis/*". Throws GraphError for any other name.
RewriteConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

struct RewriteResult {
  TrainingGraph graph;
  RewritePlan plan;
};

// Forward tensors read by the backward phase, in the order swap selection
// considers them: BFS depth of the producer, then producer id, then tensor id.
// Scope filters are applied to the producer scope: incl_scopes (when given)
// first as a whitelist, then excl_scopes as a blacklist.
std::vector<std::string> swap_candidates(const TrainingGraph& tg, const RewriteConfig& cfg);

// First n_tensors swap candidates (all of them for -1).
std::vector<std::string> select_swap_tensors(const TrainingGraph& tg, const RewriteConfig& cfg);

// Adds "swap_out/<t>" (t -> host "host/<t>") and "swap_in/<t>" (host ->
// "swapin/<t>") per selected tensor and rewires the backward consumers to the
// swapped-in copy. The swap-in is released by a control edge from the compute
// node lb positions ahead of the earliest backward consumer, clamped to the
// first backward node and to just after the producer; a trigger can never be
// the consumer itself.
RewriteResult insert_swap_nodes(const TrainingGraph& tg, const std::vector<std::string>& selection, int lb);

// Checkpoint tensors, ordered by serial position of their producer. The
// loss inputs are always kept.
std::vector<std::string> plan_checkpoints(const TrainingGraph& tg, const RewriteConfig& cfg);

// Non-checkpoint feature maps are dropped after their last forward use and
// re-materialized by "recompute/<node>" clones scheduled right before the
// first backward node that needs them.
RewriteResult insert_recompute(const TrainingGraph& tg, const std::vector<std::string>& checkpoints);

// Dispatches on cfg.mode.
RewriteResult apply_rewrite(const TrainingGraph& tg, const RewriteConfig& cfg);

inline constexpr std::string_view kMissingNode = "missing node";
inline constexpr std::string_view kBypassesSwapIn = "consumer bypasses swap_in";
inline constexpr std::string_view kMissingTrigger = "missing trigger";
inline constexpr std::string_view kCloneMismatch = "clone mismatch";

ValidationReport check_rewrite_validity(const TrainingGraph& original, const TrainingGraph& rewritten,
                                        const RewritePlan& plan);

}  // namespace swapsim
