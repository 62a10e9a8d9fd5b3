// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace swapsim {

enum class RewriteMode { kNone, kSwap, kRecompute };
enum class CheckpointPolicy { kSpeed, kSqrtN, kManual };

std::string_view to_string(RewriteMode mode);
std::string_view to_string(CheckpointPolicy policy);
std::optional<RewriteMode> parse_rewrite_mode(std::string_view name);
std::optional<CheckpointPolicy> parse_checkpoint_policy(std::string_view name);

// Swap tuning knobs.
struct RewriteConfig {
  RewriteMode mode = RewriteMode::kNone;
  int n_tensors = -1;  // -1 swaps every candidate
  int lb = 1;
  std::vector<std::string> excl_scopes;
  std::vector<std::string> incl_scopes;
  CheckpointPolicy ckpt_policy = CheckpointPolicy::kSpeed;
  std::vector<std::string> manual_ckpts;

  // Throws GraphError on lb < 1, n_tensors < -1, or n_tensors == 0 with an
  // active mode.
  void validate() const;
};

struct SwapEntry {
  std::string tensor;
  std::string swap_out;
  std::string swap_in;
  std::string trigger;

  friend bool operator==(const SwapEntry&, const SwapEntry&) = default;
};

struct RecomputeSegment {
  // Checkpoint the re-execution starts from; empty when it starts at a graph
  // input.
  std::string checkpoint;
  // Backward node the clones are scheduled in front of.
  std::string before;
  // Original forward node ids, in re-execution order.
  std::vector<std::string> nodes;

  friend bool operator==(const RecomputeSegment&, const RecomputeSegment&) = default;
};

struct RewritePlan {
  RewriteMode mode = RewriteMode::kNone;
  int lb = 1;
  std::vector<SwapEntry> swapped;
  std::vector<std::string> checkpoints;
  std::vector<RecomputeSegment> recompute_segments;

  friend bool operator==(const RewritePlan&, const RewritePlan&) = default;
};

nlohmann::json plan_to_json(const RewritePlan& plan);
RewritePlan plan_from_json(const nlohmann::json& doc);
void save_plan(const RewritePlan& plan, const std::filesystem::path& path);
RewritePlan load_plan(const std::filesystem::path& path);

}  // namespace swapsim
