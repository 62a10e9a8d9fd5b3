// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "swapsim/train_expand.hpp"

namespace swapsim {

// Raised when execution breaks residency discipline ("use-after-swap: ...")
// or produces a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxToyElements = 10000;

// Toy semantics, per output element i of a node with combined input z:
//   conv, matmul       y_i = a_i * z[i mod |z|] + b_i, a_i in [0.8, 1.2]
//   activation         y_i = max(0, z[i mod |z|])
//   norm               y = u - mean(u), u_i = z[i mod |z|]
//   pool, upsample,
//   source, sink       y_i = z[i mod |z|]
//   loss               0.5 * sum of squares of every input
// z is the concatenation of the inputs for concat and their broadcast sum
// (z_i = sum_j x_j[i mod |x_j|]) otherwise. Nodes without inputs generate
// values in [-1, 1] from the seed. Weights derive from (seed, origin node).
struct NumericOptions {
  // Replaces the generated values of these tensors (graph inputs only).
  std::map<std::string, std::vector<double>> input_override;
};

struct NumericResult {
  double loss = 0;
  // Every tensor produced by a gradient node.
  std::map<std::string, std::vector<double>> gradients;
  // Gradients of the graph inputs ("grad/<tensor>"), a subset of gradients.
  std::map<std::string, std::vector<double>> input_gradients;
  // Values of the graph inputs used by the run.
  std::map<std::string, std::vector<double>> inputs;
  // Executed node ids, io nodes included.
  std::vector<std::string> trace;
};

// Runs one iteration of a (possibly rewritten) training graph. swap_out runs
// after the producer and every forward consumer, moving the array to the host
// buffer; swap_in runs right after its trigger. Device tensors are freed after
// their last consumer. Reading a tensor that is not device-resident throws
// NumericError naming "use-after-swap".
NumericResult run_numeric(const TrainingGraph& tg, std::uint64_t seed, const NumericOptions& opts = {});

struct GradCheckResult {
  double max_rel_error = 0;
  std::uint64_t seed_used = 0;
  int resamples = 0;
  std::size_t probes = 0;
};

// Central differences on the graph inputs. When a perturbed run flips the
// sign of any activation input the sample point sits on a kink and is redrawn
// from a fresh seed; the override (if any) only applies to the first attempt.
// At most max_probes elements per input are probed, spread evenly.
GradCheckResult grad_check(const TrainingGraph& tg, std::uint64_t seed, double eps, std::size_t max_probes = 64,
                           const NumericOptions& opts = {});

struct EquivalenceCase {
  std::string label;
  TrainingGraph graph;  // rewritten graph
};

struct EquivalenceEntry {
  std::string label;
  double max_deviation = 0;
  std::string error;  // non-empty when a run failed
};

// Max abs difference over the loss and all gradients, per case, over seeds.
std::vector<EquivalenceEntry> equivalence_check(const TrainingGraph& base, const std::vector<EquivalenceCase>& cases,
                                                const std::vector<std::uint64_t>& seeds);

}  // namespace swapsim
