// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/scenario.hpp"

#include <set>

#include "swapsim/graph_io.hpp"
#include "swapsim/rewrite.hpp"
#include "swapsim/units.hpp"

namespace swapsim {
namespace {

void only_keys(const nlohmann::json& obj, std::string_view where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw GraphError(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw GraphError("unknown key '" + key + "' in " + std::string(where));
  }
}

std::uint64_t bytes_field(const nlohmann::json& v) {
  if (v.is_string()) return parse_byte_size(v.get<std::string>());
  return v.get<std::uint64_t>();
}

}  // namespace

RewriteConfig rewrite_config_from_json(const nlohmann::json& doc) {
  if (doc.is_string()) return preset_config(doc.get<std::string>());
  only_keys(doc, "rewrite", {"mode", "n_tensors", "lb", "excl_scopes", "incl_scopes", "ckpt_policy", "manual_ckpts"});
  RewriteConfig cfg;
  if (doc.contains("mode")) {
    auto mode = parse_rewrite_mode(doc["mode"].get<std::string>());
    if (!mode) throw GraphError("unknown rewrite mode " + doc["mode"].dump());
    cfg.mode = *mode;
  }
  cfg.n_tensors = doc.value("n_tensors", cfg.n_tensors);
  cfg.lb = doc.value("lb", cfg.lb);
  cfg.excl_scopes = doc.value("excl_scopes", cfg.excl_scopes);
  cfg.incl_scopes = doc.value("incl_scopes", cfg.incl_scopes);
  if (doc.contains("ckpt_policy")) {
    auto p = parse_checkpoint_policy(doc["ckpt_policy"].get<std::string>());
    if (!p) throw GraphError("unknown checkpoint policy " + doc["ckpt_policy"].dump());
    cfg.ckpt_policy = *p;
  }
  cfg.manual_ckpts = doc.value("manual_ckpts", cfg.manual_ckpts);
  cfg.validate();
  return cfg;
}

Scenario scenario_from_json(const nlohmann::json& doc) {
  try {
    only_keys(doc, "scenario", {"generator", "expand", "rewrite", "sim", "outputs"});
    Scenario s;
    if (doc.contains("generator")) {
      const auto& gen = doc["generator"];
      s.generator = gen.value("type", s.generator);
      if (s.generator == "unet") {
        only_keys(gen, "generator", {"type", "dims", "in_channels", "base_filters", "depth", "elem_bytes",
                                     "convs_per_level"});
        s.unet.dims = gen.value("dims", s.unet.dims);
        s.unet.in_channels = gen.value("in_channels", s.unet.in_channels);
        s.unet.base_filters = gen.value("base_filters", s.unet.base_filters);
        s.unet.depth = gen.value("depth", s.unet.depth);
        s.unet.elem_bytes = gen.value("elem_bytes", s.unet.elem_bytes);
        s.unet.convs_per_level = gen.value("convs_per_level", s.unet.convs_per_level);
        validate(s.unet);
      } else if (s.generator == "chain") {
        only_keys(gen, "generator", {"type", "n", "bytes", "cost"});
        s.chain_n = gen.value("n", s.chain_n);
        if (gen.contains("bytes")) s.chain_bytes = bytes_field(gen["bytes"]);
        s.chain_cost = gen.value("cost", s.chain_cost);
      } else {
        throw GraphError("unknown generator type '" + s.generator + "'");
      }
    }
    if (doc.contains("expand")) {
      const auto& e = doc["expand"];
      only_keys(e, "expand", {"static_bytes", "backward_cost_ratio"});
      if (e.contains("static_bytes")) s.expand.static_bytes = bytes_field(e["static_bytes"]);
      s.expand.backward_cost_ratio = e.value("backward_cost_ratio", s.expand.backward_cost_ratio);
    }
    if (doc.contains("rewrite")) {
      s.rewrite = rewrite_config_from_json(doc["rewrite"]);
      if (doc["rewrite"].is_string()) s.preset = doc["rewrite"].get<std::string>();
    }
    if (doc.contains("sim")) {
      const auto& j = doc["sim"];
      only_keys(j, "sim", {"link", "compute_rate", "d2h_bw", "h2d_bw", "xfer_latency", "gpu_budget", "static_bytes",
                           "enforce_budget", "calibrate"});
      if (j.contains("link")) s.sim = link_preset(j["link"].get<std::string>());
      s.sim.compute_rate = j.value("compute_rate", s.sim.compute_rate);
      s.sim.d2h_bw = j.value("d2h_bw", s.sim.d2h_bw);
      s.sim.h2d_bw = j.value("h2d_bw", s.sim.h2d_bw);
      s.sim.xfer_latency = j.value("xfer_latency", s.sim.xfer_latency);
      if (j.contains("gpu_budget")) s.sim.gpu_budget = bytes_field(j["gpu_budget"]);
      if (j.contains("static_bytes")) s.sim.static_bytes = bytes_field(j["static_bytes"]);
      s.sim.enforce_budget = j.value("enforce_budget", s.sim.enforce_budget);
      if (j.contains("calibrate")) {
        const auto& c = j["calibrate"];
        only_keys(c, "calibrate", {"preset", "target_seconds"});
        s.calibrate_preset = c.value("preset", s.calibrate_preset);
        preset_config(s.calibrate_preset);
        s.calibrate_target = c.at("target_seconds").get<double>();
      }
      s.sim.validate();
    }
    if (doc.contains("outputs")) {
      const auto& o = doc["outputs"];
      only_keys(o, "outputs", {"trace", "report"});
      s.trace_path = o.value("trace", s.trace_path);
      s.report_path = o.value("report", s.report_path);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed scenario: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw GraphError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(parse_document(read_text_file(path))); }

TrainingGraph scenario_training_graph(const Scenario& s) {
  GraphSpec g = s.generator == "chain" ? gen_chain(s.chain_n, s.chain_bytes, s.chain_cost) : gen_unet3d(s.unet);
  return expand_training_graph(g, s.expand);
}

SimConfig scenario_sim_config(const Scenario& s, const TrainingGraph& tg) {
  SimConfig cfg = s.sim;
  if (s.calibrate_target) {
    auto reference = apply_rewrite(tg, preset_config(s.calibrate_preset));
    auto free_run = cfg;
    free_run.enforce_budget = false;
    cfg.compute_rate = calibrate_compute_rate(reference.graph, free_run, *s.calibrate_target);
  }
  return cfg;
}

}  // namespace swapsim
