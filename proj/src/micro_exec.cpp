// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/micro_exec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

namespace swapsim {
namespace {

using Vec = std::vector<double>;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform in [0, 1).
double unit(std::uint64_t seed, std::uint64_t key, std::uint64_t k, std::uint64_t i) {
  auto h = splitmix(splitmix(splitmix(seed ^ key) + k) + i);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

const std::string& origin_of(const NodeSpec& n) { return n.origin.empty() ? n.id : n.origin; }

// Forward-output name a backward reader refers to.
std::string logical_name(std::string_view t) {
  for (std::string_view prefix : {"swapin/", "recompute/"}) {
    if (t.starts_with(prefix)) return std::string(t.substr(prefix.size()));
  }
  return std::string(t);
}

enum class Where { kDevice, kHost, kFreed };

class Executor {
 public:
  Executor(const TrainingGraph& tg, std::uint64_t seed, const NumericOptions& opts)
      : g_(tg.graph), index_(tg.graph), seed_(seed), opts_(opts) {
    for (const auto& t : g_.tensors) {
      if (static_cast<std::size_t>(t.elements()) > kMaxToyElements) {
        throw NumericError("tensor '" + t.id + "' has " + std::to_string(t.elements()) + " elements; toy limit is " +
                           std::to_string(kMaxToyElements));
      }
      remaining_[t.id] = index_.consumers_of(t.id).size();
    }
    order_ = execution_order(tg);
  }

  NumericResult run() {
    for (auto n : order_) step(g_.nodes[n]);
    return std::move(result_);
  }

  // Sign pattern of every activation input, in execution order.
  const std::vector<bool>& activation_mask() const { return mask_; }

 private:
  std::vector<std::size_t> execution_order(const TrainingGraph& tg) const {
    std::unordered_map<std::size_t, std::size_t> pos;
    for (std::size_t i = 0; i < tg.serial_order.size(); ++i) pos[*index_.node(tg.serial_order[i])] = i;
    // io nodes get the slot of the compute node they follow
    std::unordered_map<std::size_t, std::size_t> slot;
    std::function<std::size_t(std::size_t)> slot_of = [&](std::size_t n) -> std::size_t {
      if (auto it = pos.find(n); it != pos.end()) return it->second;
      if (auto it = slot.find(n); it != slot.end()) return it->second;
      std::size_t s = 0;
      for (auto p : index_.preds(n)) s = std::max(s, slot_of(p));
      const auto& node = g_.nodes[n];
      if (node.kind == NodeKind::kSwapOut) {
        for (const auto& in : node.inputs) {
          for (auto c : index_.consumers_of(in)) {
            if (!g_.nodes[c].is_io() && g_.nodes[c].phase == Phase::kForward) s = std::max(s, slot_of(c));
          }
        }
      }
      slot[n] = s;
      return s;
    };
    std::vector<std::vector<std::size_t>> after(tg.serial_order.size());
    for (std::size_t n = 0; n < g_.nodes.size(); ++n) {
      if (g_.nodes[n].is_io()) after[slot_of(n)].push_back(n);
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < tg.serial_order.size(); ++i) {
      order.push_back(*index_.node(tg.serial_order[i]));
      auto& io = after[i];
      std::sort(io.begin(), io.end(), [&](std::size_t a, std::size_t b) {
        auto ka = g_.nodes[a].kind == NodeKind::kSwapIn, kb = g_.nodes[b].kind == NodeKind::kSwapIn;
        return std::tie(ka, g_.nodes[a].id) < std::tie(kb, g_.nodes[b].id);
      });
      order.insert(order.end(), io.begin(), io.end());
    }
    return order;
  }

  const Vec& read(const std::string& t) const {
    auto w = where_.find(t);
    if (w == where_.end() || w->second != Where::kDevice) {
      std::string state = w == where_.end() ? "not yet produced" : w->second == Where::kHost ? "on host" : "freed";
      throw NumericError("use-after-swap: tensor '" + t + "' read while " + state);
    }
    return device_.at(t);
  }

  void write(const std::string& t, Vec v) {
    for (double x : v) {
      if (!std::isfinite(x)) throw NumericError("non-finite value in tensor '" + t + "'");
    }
    device_[t] = std::move(v);
    where_[t] = Where::kDevice;
  }

  void release_inputs(const NodeSpec& n) {
    std::set<std::string> seen;
    for (const auto& in : n.inputs) {
      if (!seen.insert(in).second) continue;
      if (--remaining_[in] == 0 && where_[in] == Where::kDevice) {
        device_.erase(in);
        where_[in] = Where::kFreed;
      }
    }
  }

  std::size_t size_of(const std::string& t) const { return static_cast<std::size_t>(index_.tensor_at(t).elements()); }

  Vec combine(const NodeSpec& n) const {
    Vec z;
    if (n.kind == NodeKind::kConcat) {
      for (const auto& in : n.inputs) {
        const auto& x = read(in);
        z.insert(z.end(), x.begin(), x.end());
      }
      return z;
    }
    std::size_t len = 0;
    for (const auto& in : n.inputs) len = std::max(len, size_of(in));
    z.assign(len, 0.0);
    for (const auto& in : n.inputs) {
      const auto& x = read(in);
      for (std::size_t i = 0; i < len; ++i) z[i] += x[i % x.size()];
    }
    return z;
  }

  Vec generate(const NodeSpec& n, std::size_t k, const std::string& out) {
    if (auto it = opts_.input_override.find(logical_name(out)); it != opts_.input_override.end()) {
      if (it->second.size() != size_of(out)) throw NumericError("override for '" + out + "' has the wrong size");
      return it->second;
    }
    Vec v(size_of(out));
    const auto key = fnv1a(origin_of(n));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * unit(seed_, key, k, i) - 1.0;
    return v;
  }

  void affine_weights(const NodeSpec& n, std::size_t k, std::size_t i, double& a, double& b) const {
    const auto key = fnv1a(origin_of(n)) ^ 0x5bd1e995ULL;
    a = 0.8 + 0.4 * unit(seed_, key, 2 * k, i);
    b = 0.2 * unit(seed_, key, 2 * k + 1, i) - 0.1;
  }

  Vec forward_output(const NodeSpec& n, std::size_t k, const Vec& z, std::size_t len) {
    Vec y(len);
    const std::size_t m = z.size();
    switch (n.kind) {
      case NodeKind::kConv:
      case NodeKind::kMatmul:
        for (std::size_t i = 0; i < len; ++i) {
          double a, b;
          affine_weights(n, k, i, a, b);
          y[i] = a * z[i % m] + b;
        }
        break;
      case NodeKind::kActivation:
        for (std::size_t i = 0; i < len; ++i) {
          mask_.push_back(z[i % m] > 0);
          y[i] = std::max(0.0, z[i % m]);
        }
        break;
      case NodeKind::kNorm: {
        for (std::size_t i = 0; i < len; ++i) y[i] = z[i % m];
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(len);
        for (auto& v : y) v -= mean;
        break;
      }
      default:
        for (std::size_t i = 0; i < len; ++i) y[i] = z[i % m];
        break;
    }
    return y;
  }

  void forward(const NodeSpec& n) {
    if (n.kind == NodeKind::kLoss) {
      double loss = 0;
      std::set<std::string> seen;
      std::unordered_map<std::string, const Vec*> by_input;
      for (const auto& in : n.inputs) {
        const auto& x = read(in);
        by_input[in] = &x;
        if (!seen.insert(in).second) continue;
        for (double v : x) loss += 0.5 * v * v;
      }
      result_.loss = loss;
      for (const auto& out : n.outputs) {
        if (out.starts_with("grad/")) {
          // seed gradient "grad/<loss>/<input>"
          const auto input = out.substr(("grad/" + n.id + "/").size());
          write(out, *by_input.at(input));
        } else {
          write(out, Vec(size_of(out), 0.0));
          device_[out][0] = loss;
        }
      }
      return;
    }
    if (n.inputs.empty()) {
      for (std::size_t k = 0; k < n.outputs.size(); ++k) {
        auto v = generate(n, k, n.outputs[k]);
        result_.inputs[logical_name(n.outputs[k])] = v;
        write(n.outputs[k], std::move(v));
      }
      return;
    }
    const Vec z = combine(n);
    for (std::size_t k = 0; k < n.outputs.size(); ++k) {
      write(n.outputs[k], forward_output(n, k, z, size_of(n.outputs[k])));
    }
  }

  void backward(const NodeSpec& n) {
    const auto& f = index_.node_at(n.origin);
    // dy per forward output, summed in input-list order (sorted consumers).
    std::vector<Vec> dy(f.outputs.size());
    std::vector<const Vec*> y(f.outputs.size(), nullptr);
    for (const auto& in : n.inputs) {
      std::optional<std::size_t> match;
      if (in.starts_with("grad/")) {
        for (std::size_t k = 0; k < f.outputs.size(); ++k) {
          if (in.ends_with("/" + f.outputs[k]) && (!match || f.outputs[k].size() > f.outputs[*match].size())) match = k;
        }
        if (!match) throw NumericError("gradient node '" + n.id + "' has unmatched input '" + in + "'");
        const auto& g = read(in);
        auto& acc = dy[*match];
        if (acc.empty()) acc.assign(g.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
      } else {
        auto name = logical_name(in);
        auto it = std::find(f.outputs.begin(), f.outputs.end(), name);
        if (it == f.outputs.end()) throw NumericError("gradient node '" + n.id + "' reads unrelated '" + in + "'");
        y[it - f.outputs.begin()] = &read(in);
      }
    }
    for (std::size_t k = 0; k < f.outputs.size(); ++k) {
      if (dy[k].empty()) dy[k].assign(size_of(f.outputs[k]), 0.0);
    }

    if (f.inputs.empty()) {
      for (std::size_t k = 0; k < n.outputs.size(); ++k) emit_gradient(n.outputs[k], dy[k], true);
      return;
    }

    std::size_t zlen = 0;
    if (f.kind == NodeKind::kConcat) {
      for (const auto& in : f.inputs) zlen += size_of(in);
    } else {
      for (const auto& in : f.inputs) zlen = std::max(zlen, size_of(in));
    }
    Vec dz(zlen, 0.0);
    for (std::size_t k = 0; k < f.outputs.size(); ++k) {
      const auto& d = dy[k];
      const std::size_t len = d.size();
      switch (f.kind) {
        case NodeKind::kConv:
        case NodeKind::kMatmul:
          for (std::size_t i = 0; i < len; ++i) {
            double a, b;
            affine_weights(f, k, i, a, b);
            dz[i % zlen] += a * d[i];
          }
          break;
        case NodeKind::kActivation: {
          if (!y[k]) throw NumericError("gradient node '" + n.id + "' lacks the activation output");
          const auto& out = *y[k];
          for (std::size_t i = 0; i < len; ++i) {
            if (out[i] > 0) dz[i % zlen] += d[i];
          }
          break;
        }
        case NodeKind::kNorm: {
          const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(len);
          for (std::size_t i = 0; i < len; ++i) dz[i % zlen] += d[i] - mean;
          break;
        }
        default:
          for (std::size_t i = 0; i < len; ++i) dz[i % zlen] += d[i];
          break;
      }
    }

    // outputs are "grad/<f>/<input>" for each distinct input
    std::size_t offset = 0;
    std::unordered_map<std::string, Vec> dx;
    for (const auto& in : f.inputs) {
      const std::size_t sz = size_of(in);
      auto& acc = dx.try_emplace(in, Vec(sz, 0.0)).first->second;
      if (f.kind == NodeKind::kConcat) {
        for (std::size_t i = 0; i < sz; ++i) acc[i] += dz[offset + i];
        offset += sz;
      } else {
        for (std::size_t i = 0; i < zlen; ++i) acc[i % sz] += dz[i];
      }
    }
    const std::string prefix = "grad/" + f.id + "/";
    for (const auto& out : n.outputs) emit_gradient(out, dx.at(out.substr(prefix.size())), false);
  }

  void emit_gradient(const std::string& t, const Vec& v, bool input) {
    result_.gradients[t] = v;
    if (input) result_.input_gradients[t] = v;
    write(t, v);
  }

  void step(const NodeSpec& n) {
    result_.trace.push_back(n.id);
    switch (n.kind) {
      case NodeKind::kSwapOut: {
        const auto& t = n.inputs.front();
        host_[n.outputs.front()] = read(t);
        where_[n.outputs.front()] = Where::kHost;
        device_.erase(t);
        where_[t] = Where::kHost;
        break;
      }
      case NodeKind::kSwapIn: {
        const auto& h = n.inputs.front();
        auto it = host_.find(h);
        if (it == host_.end()) throw NumericError("use-after-swap: host buffer '" + h + "' is empty");
        write(n.outputs.front(), it->second);
        break;
      }
      case NodeKind::kGrad:
        backward(n);
        break;
      default:
        forward(n);
        break;
    }
    if (n.kind != NodeKind::kSwapOut) release_inputs(n);
    else remaining_[n.inputs.front()] = 0;
  }

  const GraphSpec& g_;
  GraphIndex index_;
  std::uint64_t seed_;
  const NumericOptions& opts_;
  std::vector<std::size_t> order_;
  std::unordered_map<std::string, std::size_t> remaining_;
  std::unordered_map<std::string, Vec> device_;
  std::unordered_map<std::string, Vec> host_;
  std::unordered_map<std::string, Where> where_;
  std::vector<bool> mask_;
  NumericResult result_;
};

double max_abs_diff(const NumericResult& a, const NumericResult& b) {
  double dev = std::abs(a.loss - b.loss);
  if (std::isnan(dev)) return std::numeric_limits<double>::infinity();
  for (const auto& [t, v] : a.gradients) {
    auto it = b.gradients.find(t);
    if (it == b.gradients.end() || it->second.size() != v.size()) return std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) dev = std::max(dev, std::abs(v[i] - it->second[i]));
  }
  if (b.gradients.size() != a.gradients.size()) return std::numeric_limits<double>::infinity();
  return dev;
}

}  // namespace

NumericResult run_numeric(const TrainingGraph& tg, std::uint64_t seed, const NumericOptions& opts) {
  return Executor(tg, seed, opts).run();
}

GradCheckResult grad_check(const TrainingGraph& tg, std::uint64_t seed, double eps, std::size_t max_probes,
                           const NumericOptions& opts) {
  if (!(eps > 0)) throw NumericError("eps must be positive");
  if (max_probes == 0) throw NumericError("max_probes must be positive");
  GradCheckResult out;
  NumericOptions current = opts;
  std::uint64_t s = seed;
  constexpr int kMaxResamples = 64;
  for (;;) {
    Executor ex(tg, s, current);
    auto base = ex.run();
    const auto mask = ex.activation_mask();
    auto loss_at = [&](const NumericOptions& probe, bool& kink) {
      Executor e(tg, s, probe);
      auto r = e.run();
      kink = kink || e.activation_mask() != mask;
      return r.loss;
    };
    bool kink = false;
    double worst = 0;
    std::size_t probes = 0;
    for (const auto& [t, x] : base.inputs) {
      const auto& analytic = base.input_gradients.at("grad/" + t);
      const std::size_t stride = std::max<std::size_t>(1, (x.size() + max_probes - 1) / max_probes);
      for (std::size_t i = 0; i < x.size() && !kink; i += stride) {
        NumericOptions probe;
        probe.input_override = base.inputs;
        probe.input_override[t][i] = x[i] + eps;
        const double up = loss_at(probe, kink);
        probe.input_override[t][i] = x[i] - eps;
        const double down = loss_at(probe, kink);
        const double numeric = (up - down) / (2 * eps);
        if (!std::isfinite(numeric)) throw NumericError("non-finite finite difference on '" + t + "'");
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        ++probes;
      }
    }
    if (!kink) {
      out.seed_used = s;
      out.max_rel_error = worst;
      out.probes = probes;
      break;
    }
    // the probe straddled an activation kink: draw a new point
    if (++out.resamples > kMaxResamples) throw NumericError("no kink-free sample point found");
    s = splitmix(s + static_cast<std::uint64_t>(out.resamples));
    current.input_override.clear();
  }
  return out;
}

std::vector<EquivalenceEntry> equivalence_check(const TrainingGraph& base, const std::vector<EquivalenceCase>& cases,
                                                const std::vector<std::uint64_t>& seeds) {
  std::vector<EquivalenceEntry> out;
  for (const auto& c : cases) out.push_back({c.label, 0.0, {}});
  for (auto seed : seeds) {
    const auto ref = run_numeric(base, seed);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (!out[i].error.empty()) continue;
      try {
        out[i].max_deviation = std::max(out[i].max_deviation, max_abs_diff(ref, run_numeric(cases[i].graph, seed)));
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  }
  return out;
}

}  // namespace swapsim
