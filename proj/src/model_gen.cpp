// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/model_gen.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace swapsim {
namespace {

std::string level(const char* path, int k) { return std::string(path) + "/l" + std::to_string(k); }

class UNetBuilder {
 public:
  explicit UNetBuilder(const UNetParams& p) : p_(p) {}

  struct Ref {
    std::string tensor;
    std::array<std::int64_t, 3> ext;
    std::int64_t channels;
  };

  Ref add(const std::string& id, NodeKind kind, const std::vector<Ref>& inputs,
          std::array<std::int64_t, 3> ext, std::int64_t channels) {
    TensorDesc t;
    t.id = id + ":0";
    t.producer = id;
    t.shape.assign(ext.begin(), ext.end());
    t.channels = channels;
    t.elem_bytes = p_.elem_bytes;
    t.scope = id;

    NodeSpec n;
    n.id = id;
    n.kind = kind;
    n.scope = id;
    n.phase = Phase::kForward;
    n.outputs = {t.id};
    double in_bytes = 0;
    std::int64_t in_channels = 0;
    for (const auto& r : inputs) {
      n.inputs.push_back(r.tensor);
      in_bytes += static_cast<double>(bytes_of(r));
      in_channels += r.channels;
    }
    double out_bytes = static_cast<double>(tensor_bytes(t));
    double voxels = static_cast<double>(ext[0] * ext[1] * ext[2]);
    switch (kind) {
      case NodeKind::kConv:
        n.cost_units = std::max(2.0 * 27.0 * static_cast<double>(in_channels * channels) * voxels,
                                kRidgeFlopsPerByte * (in_bytes + out_bytes));
        break;
      case NodeKind::kNorm:
        // statistics pass, normalize pass, write
        n.cost_units = kRidgeFlopsPerByte * (2.0 * in_bytes + out_bytes);
        break;
      case NodeKind::kLoss:
        n.cost_units = kRidgeFlopsPerByte * in_bytes;
        break;
      case NodeKind::kSource:
        n.cost_units = 0;
        break;
      default:
        n.cost_units = kRidgeFlopsPerByte * (in_bytes + out_bytes);
        break;
    }
    g_.nodes.push_back(std::move(n));
    g_.tensors.push_back(t);
    return {t.id, ext, channels};
  }

  Ref conv_block(const std::string& path, Ref in, std::int64_t filters) {
    for (int c = 0; c < p_.convs_per_level; ++c) {
      auto suffix = std::to_string(c);
      in = add(path + "/conv" + suffix, NodeKind::kConv, {in}, in.ext, filters);
      in = add(path + "/norm" + suffix, NodeKind::kNorm, {in}, in.ext, filters);
      in = add(path + "/act" + suffix, NodeKind::kActivation, {in}, in.ext, filters);
    }
    return in;
  }

  std::array<std::int64_t, 3> extents(int k) const {
    auto e = p_.dims;
    for (auto& d : e) d >>= k;
    return e;
  }

  std::int64_t filters(int k) const { return p_.base_filters << k; }

  GraphSpec build() {
    const int bottom = p_.depth - 1;
    std::vector<Ref> shortcuts;
    Ref cur = add("analysis/l0/input", NodeKind::kSource, {}, p_.dims, p_.in_channels);
    for (int k = 0; k < bottom; ++k) {
      auto path = level("analysis", k);
      if (k > 0) cur = add(path + "/pool", NodeKind::kPool, {cur}, extents(k), cur.channels);
      cur = conv_block(path, cur, filters(k));
      shortcuts.push_back(cur);
    }
    cur = add("bottleneck/pool", NodeKind::kPool, {cur}, extents(bottom), cur.channels);
    cur = conv_block("bottleneck", cur, filters(bottom));
    for (int k = bottom - 1; k >= 0; --k) {
      auto path = level("synthesis", k);
      cur = add(path + "/upsample", NodeKind::kUpsample, {cur}, extents(k), cur.channels);
      const auto& skip = shortcuts[static_cast<std::size_t>(k)];
      cur = add(path + "/concat", NodeKind::kConcat, {skip, cur}, extents(k), skip.channels + cur.channels);
      cur = conv_block(path, cur, filters(k));
    }
    add("synthesis/l0/loss", NodeKind::kLoss, {cur}, {1, 1, 1}, 1);
    g_.tensors.back().shape = {1};

    g_.metadata["generator"] = "unet3d";
    g_.metadata["dims"] = std::to_string(p_.dims[0]) + "x" + std::to_string(p_.dims[1]) + "x" +
                          std::to_string(p_.dims[2]);
    g_.metadata["in_channels"] = std::to_string(p_.in_channels);
    g_.metadata["base_filters"] = std::to_string(p_.base_filters);
    g_.metadata["depth"] = std::to_string(p_.depth);
    g_.metadata["convs_per_level"] = std::to_string(p_.convs_per_level);
    g_.metadata["elem_bytes"] = std::to_string(p_.elem_bytes);
    return canonicalize(std::move(g_));
  }

 private:
  std::uint64_t bytes_of(const Ref& r) const {
    return static_cast<std::uint64_t>(r.ext[0] * r.ext[1] * r.ext[2] * r.channels * p_.elem_bytes);
  }

  const UNetParams& p_;
  GraphSpec g_;
};

}  // namespace

void validate(const UNetParams& p) {
  if (p.depth < 2) throw GraphError("depth must be at least 2, got " + std::to_string(p.depth));
  if (p.in_channels <= 0) throw GraphError("in_channels must be positive");
  if (p.base_filters <= 0) throw GraphError("base_filters must be positive");
  if (p.elem_bytes <= 0) throw GraphError("elem_bytes must be positive");
  if (p.convs_per_level <= 0) throw GraphError("convs_per_level must be positive");
  const std::int64_t unit = std::int64_t{1} << (p.depth - 1);
  static constexpr const char* kAxis[] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    if (p.dims[static_cast<std::size_t>(i)] <= 0 || p.dims[static_cast<std::size_t>(i)] % unit != 0) {
      throw GraphError("dim " + std::string(kAxis[i]) + "=" + std::to_string(p.dims[static_cast<std::size_t>(i)]) +
                       " is not a positive multiple of " + std::to_string(unit) + " (2^(depth-1))");
    }
  }
}

GraphSpec gen_unet3d(const UNetParams& p) {
  validate(p);
  return UNetBuilder(p).build();
}

GraphSpec gen_chain(int n, std::uint64_t bytes_per_tensor, double cost_per_op,
                    const std::vector<NodeKind>& kinds) {
  if (n < 1) throw GraphError("chain length must be at least 1");
  if (bytes_per_tensor == 0) throw GraphError("chain tensors need a positive byte size");
  if (kinds.empty()) throw GraphError("chain needs at least one node kind");
  GraphSpec g;
  const bool words = bytes_per_tensor % 4 == 0;
  for (int i = 0; i < n; ++i) {
    auto idx = std::to_string(i);
    NodeSpec node;
    node.id = "op" + idx;
    node.kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    node.scope = "chain/op" + idx;
    node.cost_units = cost_per_op;
    if (i > 0) node.inputs = {"t" + std::to_string(i - 1)};
    node.outputs = {"t" + idx};
    TensorDesc t;
    t.id = "t" + idx;
    t.producer = node.id;
    t.shape = {static_cast<std::int64_t>(words ? bytes_per_tensor / 4 : bytes_per_tensor)};
    t.elem_bytes = words ? 4 : 1;
    t.scope = node.scope;
    g.nodes.push_back(std::move(node));
    g.tensors.push_back(std::move(t));
  }
  g.metadata["generator"] = "chain";
  g.metadata["n"] = std::to_string(n);
  return canonicalize(std::move(g));
}

std::size_t count_feature_maps(const GraphSpec& g) {
  GraphIndex index(g);
  bool expanded = std::any_of(g.nodes.begin(), g.nodes.end(),
                              [](const NodeSpec& n) { return n.phase == Phase::kBackward; });
  if (!expanded) throw GraphError("graph has no backward nodes; expand it first");
  std::set<std::string> maps;
  for (const auto& n : g.nodes) {
    if (n.phase != Phase::kBackward) continue;
    for (const auto& in : n.inputs) {
      // Look through swap_in <- swap_out pairs to the original feature map.
      std::string id = in;
      auto p = index.producer_of(id);
      while (p && g.nodes[*p].is_io() && g.nodes[*p].inputs.size() == 1) {
        id = g.nodes[*p].inputs.front();
        p = index.producer_of(id);
      }
      if (p && g.nodes[*p].phase == Phase::kForward && g.nodes[*p].kind != NodeKind::kLoss) {
        maps.insert(id);
      }
    }
  }
  return maps.size();
}

}  // namespace swapsim
