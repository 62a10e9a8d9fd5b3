// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "swapsim/graph.hpp"

namespace swapsim {

// Flop-equivalents charged per byte touched by memory-bound kernels. Ratio of
// peak FP32 throughput to HBM bandwidth on a 16 GB P100-class device
// (9.3 TFLOP/s over 732 GB/s).
inline constexpr double kRidgeFlopsPerByte = 9.3e12 / 732e9;

struct UNetParams {
  std::array<std::int64_t, 3> dims{128, 128, 128};
  std::int64_t in_channels = 4;
  std::int64_t base_filters = 16;
  int depth = 5;
  std::int64_t elem_bytes = 4;
  int convs_per_level = 2;
};

// Throws GraphError naming the first bad field.
void validate(const UNetParams& p);

// Forward graph of a 3D U-Net: `depth - 1` analysis levels, a bottleneck and
// `depth - 1` synthesis levels joined by shortcut concats, then a loss node.
// Each conv block is conv -> norm -> activation with its own output tensor.
// Node ids equal their scope path; tensor ids are "<node>:0".
//
// cost_units are roofline flop-equivalents: max(flops, ridge * bytes touched)
// with 3x3x3 kernels for convs.
GraphSpec gen_unet3d(const UNetParams& p);

// Linear chain op0 -> op1 -> ... with tensors t0..t{n-1}. op0 has no inputs.
// Node kinds cycle through `kinds` (all conv by default).
GraphSpec gen_chain(int n, std::uint64_t bytes_per_tensor, double cost_per_op,
                    const std::vector<NodeKind>& kinds = {NodeKind::kConv});

// Forward-phase tensors read by at least one backward compute node. Throws
// GraphError when the graph has no backward nodes.
std::size_t count_feature_maps(const GraphSpec& g);

}  // namespace swapsim
