// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/plan.hpp"

#include <array>
#include <utility>

#include "swapsim/graph.hpp"
#include "swapsim/graph_io.hpp"

namespace swapsim {
namespace {

constexpr std::array<std::pair<RewriteMode, std::string_view>, 3> kModes{{
    {RewriteMode::kNone, "none"},
    {RewriteMode::kSwap, "swap"},
    {RewriteMode::kRecompute, "recompute"},
}};

constexpr std::array<std::pair<CheckpointPolicy, std::string_view>, 3> kPolicies{{
    {CheckpointPolicy::kSpeed, "speed"},
    {CheckpointPolicy::kSqrtN, "sqrt_n"},
    {CheckpointPolicy::kManual, "manual"},
}};

constexpr int kPlanFormatVersion = 1;

}  // namespace

std::string_view to_string(RewriteMode mode) {
  for (const auto& [m, name] : kModes) {
    if (m == mode) return name;
  }
  return "unknown";
}

std::string_view to_string(CheckpointPolicy policy) {
  for (const auto& [p, name] : kPolicies) {
    if (p == policy) return name;
  }
  return "unknown";
}

std::optional<RewriteMode> parse_rewrite_mode(std::string_view name) {
  for (const auto& [m, n] : kModes) {
    if (n == name) return m;
  }
  return std::nullopt;
}

std::optional<CheckpointPolicy> parse_checkpoint_policy(std::string_view name) {
  for (const auto& [p, n] : kPolicies) {
    if (n == name) return p;
  }
  return std::nullopt;
}

void RewriteConfig::validate() const {
  if (lb < 1) throw GraphError("lb must be at least 1, got " + std::to_string(lb));
  if (n_tensors < -1) throw GraphError("n_tensors must be -1 or positive, got " + std::to_string(n_tensors));
  if (n_tensors == 0 && mode != RewriteMode::kNone) throw GraphError("n_tensors must not be 0");
}

nlohmann::json plan_to_json(const RewritePlan& plan) {
  nlohmann::json swapped = nlohmann::json::array();
  for (const auto& s : plan.swapped) {
    swapped.push_back({{"tensor", s.tensor}, {"swap_out", s.swap_out}, {"swap_in", s.swap_in}, {"trigger", s.trigger}});
  }
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : plan.recompute_segments) {
    segments.push_back({{"checkpoint", s.checkpoint}, {"before", s.before}, {"nodes", s.nodes}});
  }
  return {{"version", kPlanFormatVersion},
          {"mode", to_string(plan.mode)},
          {"lb", plan.lb},
          {"swapped", std::move(swapped)},
          {"checkpoints", plan.checkpoints},
          {"recompute_segments", std::move(segments)}};
}

RewritePlan plan_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != kPlanFormatVersion) {
      throw GraphError("unsupported plan format version " + doc.at("version").dump());
    }
    RewritePlan plan;
    auto mode = parse_rewrite_mode(doc.at("mode").get<std::string>());
    if (!mode) throw GraphError("unknown rewrite mode " + doc.at("mode").dump());
    plan.mode = *mode;
    plan.lb = doc.at("lb").get<int>();
    for (const auto& s : doc.at("swapped")) {
      plan.swapped.push_back({s.at("tensor").get<std::string>(), s.at("swap_out").get<std::string>(),
                              s.at("swap_in").get<std::string>(), s.at("trigger").get<std::string>()});
    }
    plan.checkpoints = doc.at("checkpoints").get<std::vector<std::string>>();
    for (const auto& s : doc.at("recompute_segments")) {
      plan.recompute_segments.push_back({s.at("checkpoint").get<std::string>(), s.at("before").get<std::string>(),
                                         s.at("nodes").get<std::vector<std::string>>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed plan: ") + e.what());
  }
}

void save_plan(const RewritePlan& plan, const std::filesystem::path& path) {
  write_text_file(path, dump_document(plan_to_json(plan)));
}

RewritePlan load_plan(const std::filesystem::path& path) {
  return plan_from_json(parse_document(read_text_file(path)));
}

}  // namespace swapsim
