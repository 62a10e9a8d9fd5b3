// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "swapsim/model_gen.hpp"
#include "swapsim/plan.hpp"
#include "swapsim/sim.hpp"
#include "swapsim/train_expand.hpp"

namespace swapsim {

// One reproducible run: generator, expansion, rewrite and simulator settings.
//
//   {
//     "generator": {"type": "unet", "dims": [192, 192, 192], "depth": 5, ...}
//                | {"type": "chain", "n": 8, "bytes": 1048576, "cost": 1.0},
//     "expand":    {"static_bytes": "2GiB", "backward_cost_ratio": 2.0},
//     "rewrite":   "paper-c4" | {"mode": "swap", "n_tensors": -1, "lb": 1, ...},
//     "sim":       {"link": "nvlink1", "compute_rate": 1e12, "gpu_budget": "16GiB",
//                   "enforce_budget": false, "xfer_latency": 0,
//                   "calibrate": {"preset": "paper-c1", "target_seconds": 4.0}},
//     "outputs":   {"trace": "t.json", "report": "r.json"}
//   }
//
// Every section is optional. Unknown keys are rejected.
struct Scenario {
  std::string generator = "unet";
  UNetParams unet;
  int chain_n = 8;
  std::uint64_t chain_bytes = 1 << 20;
  double chain_cost = 1.0;

  ExpandOptions expand;
  RewriteConfig rewrite;
  std::string preset;  // set when the rewrite names a preset

  SimConfig sim;
  std::string calibrate_preset = "paper-c1";
  std::optional<double> calibrate_target;  // seconds per iteration

  std::string trace_path;
  std::string report_path;
};

// Throws GraphError with the offending key on malformed input.
Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

// "paper-c1".."paper-c4" or a rewrite object.
RewriteConfig rewrite_config_from_json(const nlohmann::json& doc);

// Generated forward graph, expanded for training.
TrainingGraph scenario_training_graph(const Scenario& s);

// Simulator settings with calibration applied.
SimConfig scenario_sim_config(const Scenario& s, const TrainingGraph& tg);

}  // namespace swapsim
