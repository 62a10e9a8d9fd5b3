// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swapsim/graph_io.hpp"
#include "swapsim/micro_exec.hpp"
#include "swapsim/model_gen.hpp"
#include "swapsim/oracles/verify_suite.hpp"
#include "swapsim/rewrite.hpp"
#include "swapsim/scenario.hpp"
#include "swapsim/sim.hpp"
#include "swapsim/train_expand.hpp"
#include "swapsim/units.hpp"

namespace {

using namespace swapsim;

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      v = static_cast<T>(std::stod(s, &used));
      if (used != s.size()) throw UsageError("bad number '" + s + "'");
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + s + "'");
    }
  } else {
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw UsageError("bad number '" + s + "'");
  }
  return v;
}

std::uint64_t flag_bytes(const std::string& flag, const std::string& s) {
  try {
    return parse_byte_size(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

// "1..20" or "1,2,7".
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  if (auto dots = s.find(".."); dots != std::string::npos) {
    auto lo = parse_number<std::uint64_t>(s.substr(0, dots));
    auto hi = parse_number<std::uint64_t>(s.substr(dots + 2));
    if (hi < lo) throw UsageError("empty seed range '" + s + "'");
    for (auto i = lo; i <= hi; ++i) out.push_back(i);
    return out;
  }
  for (const auto& item : split_list(s)) out.push_back(parse_number<std::uint64_t>(item));
  if (out.empty()) throw UsageError("no seeds given");
  return out;
}

// Rewrite flags shared by rewrite, simulate and sweep.
struct RewriteFlags {
  std::string preset;
  std::string mode;
  int n_tensors = -1;
  int lb = 1;
  std::vector<std::string> excl;
  std::vector<std::string> incl;
  std::string ckpt_policy = "speed";
  std::vector<std::string> ckpts;
  // Without --mode, swap knobs imply swap and checkpoint knobs recompute.
  std::vector<CLI::Option*> swap_knobs;
  std::vector<CLI::Option*> ckpt_knobs;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "paper-c1 .. paper-c4");
    app->add_option("--mode", mode, "none | swap | recompute (default: implied by the other flags)");
    swap_knobs = {app->add_option("--n-tensors", n_tensors, "swap at most this many tensors (-1: all)"),
                  app->add_option("--lb", lb, "swap-in lookahead in serialized ops"),
                  app->add_option("--excl", excl, "scope glob excluded from swapping (repeatable)"),
                  app->add_option("--incl", incl, "scope glob eligible for swapping (repeatable)")};
    ckpt_knobs = {app->add_option("--ckpt-policy", ckpt_policy, "speed | sqrt_n | manual"),
                  app->add_option("--ckpt", ckpts, "manual checkpoint tensor (repeatable)")};
  }

  static bool any_given(const std::vector<CLI::Option*>& opts) {
    return std::any_of(opts.begin(), opts.end(), [](const CLI::Option* o) { return o->count() > 0; });
  }

  bool rewriting() const { return !preset.empty() || !mode.empty() || any_given(swap_knobs) || any_given(ckpt_knobs); }

  RewriteConfig config() const {
    if (!preset.empty()) {
      if (!mode.empty()) throw UsageError("--preset and --mode are mutually exclusive");
      return preset_config(preset);
    }
    RewriteConfig cfg;
    if (!mode.empty()) {
      auto m = parse_rewrite_mode(mode);
      if (!m) throw UsageError("unknown mode '" + mode + "'");
      cfg.mode = *m;
    } else if (any_given(swap_knobs) && any_given(ckpt_knobs)) {
      throw UsageError("swap and checkpoint flags given without --mode");
    } else if (any_given(swap_knobs)) {
      cfg.mode = RewriteMode::kSwap;
    } else if (any_given(ckpt_knobs)) {
      cfg.mode = RewriteMode::kRecompute;
    }
    cfg.n_tensors = n_tensors;
    cfg.lb = lb;
    cfg.excl_scopes = excl;
    cfg.incl_scopes = incl;
    auto p = parse_checkpoint_policy(ckpt_policy);
    if (!p) throw UsageError("unknown checkpoint policy '" + ckpt_policy + "'");
    cfg.ckpt_policy = *p;
    cfg.manual_ckpts = ckpts;
    return cfg;
  }
};

struct ExpandFlags {
  std::string static_bytes;
  double backward_cost_ratio = 2.0;

  void add(CLI::App* app) {
    app->add_option("--static-bytes", static_bytes, "weights, optimizer state and workspace (e.g. 2GiB)");
    app->add_option("--backward-cost-ratio", backward_cost_ratio, "gradient node cost relative to its forward op");
  }

  ExpandOptions options() const {
    ExpandOptions o;
    if (!static_bytes.empty()) o.static_bytes = flag_bytes("--static-bytes", static_bytes);
    o.backward_cost_ratio = backward_cost_ratio;
    return o;
  }
};

// Forward graphs are expanded; expanded graphs are taken as they are.
TrainingGraph load_training_graph(const std::string& path, const ExpandFlags& flags) {
  auto g = load_graph(path);
  if (g.metadata.contains("serial_order")) return training_graph_from_spec(std::move(g));
  return expand_training_graph(g, flags.options());
}

struct SimFlags {
  std::string link;
  double compute_rate = 0;
  double d2h_bw = 0;
  double h2d_bw = 0;
  double latency = 0;
  std::string budget;
  bool enforce = false;
  double calibrate_target = 0;

  void add(CLI::App* app) {
    app->add_option("--link", link, "nvlink1 (40e9 B/s each way) | pcie3 (16e9 B/s each way)");
    app->add_option("--compute-rate", compute_rate, "cost units per second");
    app->add_option("--d2h-bw", d2h_bw, "device-to-host bytes per second");
    app->add_option("--h2d-bw", h2d_bw, "host-to-device bytes per second");
    app->add_option("--latency", latency, "seconds per transfer");
    app->add_option("--budget", budget, "device memory budget (e.g. 16GiB)");
    app->add_flag("--enforce-budget", enforce, "hold allocations until they fit the budget");
    app->add_option("--calibrate", calibrate_target,
                    "set compute rate so that paper-c1 takes this many seconds per iteration");
  }

  SimConfig config(const TrainingGraph& tg) const {
    SimConfig cfg = link.empty() ? SimConfig{} : link_preset(link);
    if (compute_rate > 0) cfg.compute_rate = compute_rate;
    if (d2h_bw > 0) cfg.d2h_bw = d2h_bw;
    if (h2d_bw > 0) cfg.h2d_bw = h2d_bw;
    cfg.xfer_latency = latency;
    if (!budget.empty()) cfg.gpu_budget = flag_bytes("--budget", budget);
    cfg.enforce_budget = enforce;
    if (calibrate_target > 0) {
      auto reference = apply_rewrite(tg, preset_config("paper-c1"));
      auto free_run = cfg;
      free_run.enforce_budget = false;
      cfg.compute_rate = calibrate_compute_rate(reference.graph, free_run, calibrate_target);
    }
    cfg.validate();
    return cfg;
  }
};

void print_peak(const LivenessReport& peak) {
  std::printf("static peak: %s\n", format_bytes(peak.peak_bytes).c_str());
  std::printf("feature-map peak: %s\n", format_bytes(peak.feature_map_peak_bytes).c_str());
}

int run_generate_unet(const UNetParams& p, const std::string& out) {
  auto g = gen_unet3d(p);
  save_graph(g, out);
  std::printf("wrote %s: %zu nodes, %zu tensors\n", out.c_str(), g.nodes.size(), g.tensors.size());
  return 0;
}

int run_generate_chain(int n, const std::string& bytes, double cost, const std::string& out) {
  auto g = gen_chain(n, flag_bytes("--bytes", bytes), cost);
  save_graph(g, out);
  std::printf("wrote %s: %zu nodes, %zu tensors\n", out.c_str(), g.nodes.size(), g.tensors.size());
  return 0;
}

int run_rewrite(const std::string& in, const RewriteFlags& rw, const ExpandFlags& ex, const std::string& out,
                std::string plan_out) {
  auto tg = load_training_graph(in, ex);
  auto cfg = rw.config();
  auto result = apply_rewrite(tg, cfg);
  auto problems = check_rewrite_validity(tg, result.graph, result.plan);
  if (!problems.empty()) throw GraphError("rewrite produced an invalid graph: " + problems.front().kind + ": " +
                                          problems.front().detail);
  save_graph(result.graph.graph, out);
  if (plan_out.empty()) {
    auto p = std::filesystem::path(out);
    plan_out = (p.parent_path() / (p.stem().string() + ".plan.json")).string();
  }
  save_plan(result.plan, plan_out);
  std::printf("mode: %s\n", std::string(to_string(result.plan.mode)).c_str());
  if (cfg.mode == RewriteMode::kSwap) {
    std::printf("swapped: %zu of %zu candidates (lb %d)\n", result.plan.swapped.size(),
                swap_candidates(tg, cfg).size(), result.plan.lb);
  } else if (cfg.mode == RewriteMode::kRecompute) {
    std::size_t clones = 0;
    for (const auto& s : result.plan.recompute_segments) clones += s.nodes.size();
    std::printf("checkpoints: %zu, recomputed nodes: %zu\n", result.plan.checkpoints.size(), clones);
  } else {
    std::printf("swapped: 0\n");
  }
  print_peak(static_peak_estimate(result.graph, &result.plan));
  std::printf("wrote %s and %s\n", out.c_str(), plan_out.c_str());
  return 0;
}

void check_plan_matches(const TrainingGraph& tg, const RewritePlan& plan) {
  GraphIndex index(tg.graph);
  for (const auto& s : plan.swapped) {
    if (!index.node(s.swap_out) || !index.node(s.swap_in) || !index.node(s.trigger)) {
      throw GraphError("plan does not match graph: missing swap nodes for '" + s.tensor + "'");
    }
  }
  for (const auto& seg : plan.recompute_segments) {
    for (const auto& n : seg.nodes) {
      if (!index.node("recompute/" + n)) throw GraphError("plan does not match graph: no clone of '" + n + "'");
    }
  }
}

int simulate_and_report(const TrainingGraph& tg, const RewritePlan* plan, const SimConfig& cfg,
                        const std::string& trace, const std::string& report_path) {
  auto peak = static_peak_estimate(tg, plan);
  bool has_io = false;
  for (const auto& n : tg.graph.nodes) has_io = has_io || n.is_io();
  if (cfg.enforce_budget && cfg.gpu_budget > 0 && !has_io && peak.peak_bytes > cfg.gpu_budget) {
    throw SimError(SimError::Kind::kInfeasible,
                   "budget violation: static peak " + format_bytes(peak.peak_bytes) + " at '" +
                       tg.serial_order[peak.peak_position] + "' exceeds budget " + format_bytes(cfg.gpu_budget));
  }
  auto r = simulate(tg, cfg);
  auto stalls = stall_report(r);
  std::printf("compute rate: %.6g units/s, d2h %.3g B/s, h2d %.3g B/s\n", cfg.compute_rate, cfg.d2h_bw, cfg.h2d_bw);
  std::printf("makespan: %.6f s\n", r.makespan);
  std::printf("peak resident: %s\n", format_bytes(r.peak_resident).c_str());
  print_peak(peak);
  std::printf("stalls: forward %.6f s, boundary %.6f s, backward %.6f s\n", stalls.forward, stalls.boundary,
              stalls.backward);
  std::printf("busy: compute %.3f, d2h %.3f, h2d %.3f\n", r.busy_fraction[0], r.busy_fraction[1], r.busy_fraction[2]);
  if (!trace.empty()) {
    emit_trace(r, trace);
    std::printf("wrote trace %s\n", trace.c_str());
  }
  if (!report_path.empty()) {
    write_text_file(report_path, dump_document(report_to_json(r)));
    std::printf("wrote report %s\n", report_path.c_str());
  }
  return 0;
}

int run_simulate(const std::string& graph, const std::string& plan_path, const std::string& scenario,
                 const RewriteFlags& rw, const ExpandFlags& ex, const SimFlags& sf, std::string trace,
                 std::string report) {
  if (!scenario.empty()) {
    if (!graph.empty()) throw UsageError("--scenario replaces the graph argument");
    auto s = load_scenario(scenario);
    auto tg = scenario_training_graph(s);
    auto cfg = scenario_sim_config(s, tg);
    auto result = apply_rewrite(tg, s.rewrite);
    if (trace.empty()) trace = s.trace_path;
    if (report.empty()) report = s.report_path;
    std::printf("scenario: %s, rewrite %s\n", scenario.c_str(),
                s.preset.empty() ? std::string(to_string(s.rewrite.mode)).c_str() : s.preset.c_str());
    return simulate_and_report(result.graph, &result.plan, cfg, trace, report);
  }
  if (graph.empty()) throw UsageError("a graph file or --scenario is required");
  auto tg = load_training_graph(graph, ex);
  const bool rewriting = rw.rewriting();
  if (!plan_path.empty()) {
    if (rewriting) throw UsageError("a plan file and rewrite flags are mutually exclusive");
    auto plan = load_plan(plan_path);
    check_plan_matches(tg, plan);
    return simulate_and_report(tg, &plan, sf.config(tg), trace, report);
  }
  auto result = apply_rewrite(tg, rw.config());
  return simulate_and_report(result.graph, &result.plan, sf.config(tg), trace, report);
}

int run_sweep(const std::string& graph, const ExpandFlags& ex, const SimFlags& sf, const std::string& presets,
              const std::string& mode, const std::string& n_list, const std::string& lb_list,
              const std::string& bw_list, const std::string& out, const std::string& json_out) {
  auto tg = load_training_graph(graph, ex);
  auto base = sf.config(tg);
  std::vector<double> bws;
  for (const auto& b : split_list(bw_list)) bws.push_back(parse_number<double>(b));
  if (bws.empty()) bws.push_back(base.d2h_bw);

  std::vector<SweepCell> grid;
  std::vector<std::string> names = presets == "all" ? preset_names() : split_list(presets);
  for (const auto& name : names) {
    for (double bw : bws) grid.push_back({name, preset_config(name), bw});
  }
  if (!n_list.empty() || !lb_list.empty() || !mode.empty()) {
    std::vector<int> ns{-1}, lbs{1};
    if (!n_list.empty()) {
      ns.clear();
      for (const auto& s : split_list(n_list)) ns.push_back(parse_number<int>(s));
    }
    if (!lb_list.empty()) {
      lbs.clear();
      for (const auto& s : split_list(lb_list)) lbs.push_back(parse_number<int>(s));
    }
    RewriteConfig cfg;
    cfg.mode = RewriteMode::kSwap;
    if (!mode.empty()) {
      auto m = parse_rewrite_mode(mode);
      if (!m) throw UsageError("unknown mode '" + mode + "'");
      cfg.mode = *m;
    }
    for (int n : ns) {
      for (int lb : lbs) {
        for (double bw : bws) {
          cfg.n_tensors = n;
          cfg.lb = lb;
          grid.push_back({"custom", cfg, bw});
        }
      }
    }
  }
  if (grid.empty()) throw UsageError("sweep grid is empty: give --presets, --n-tensors, --lb or --mode");
  auto rows = sweep(tg, grid, base);
  auto text = sweep_to_text(rows);
  std::fputs(text.c_str(), stdout);
  if (!out.empty()) write_text_file(out, text);
  if (!json_out.empty()) write_text_file(json_out, dump_document(sweep_to_json(rows)));
  for (const auto& r : rows) {
    if (!r.error.empty()) return kDomainError;
  }
  return 0;
}

int run_verify(const std::string& seeds, std::size_t instances, std::uint64_t graph_seed, const std::string& inject) {
  oracles::VerifySettings s;
  if (!seeds.empty()) s.seeds = parse_seeds(seeds);
  s.random_instances = instances;
  s.graph_seed = graph_seed;
  if (!inject.empty() && inject != "broken-swap") throw UsageError("unknown injection '" + inject + "'");
  s.inject = inject;
  bool ok = true;
  for (const auto& c : oracles::run_verify_suite(s)) {
    if (c.passed) {
      std::printf("PASS %s (%zu instances)\n", c.name.c_str(), c.instances);
    } else {
      std::printf("FAIL %s (%zu instances): %s\n", c.name.c_str(), c.instances, c.detail.c_str());
      ok = false;
    }
  }
  return ok ? 0 : kDomainError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swap-in/swap-out rewriting and simulation for training graphs"};
  app.require_subcommand(1);

  auto* generate = app.add_subcommand("generate", "write a forward graph");
  generate->require_subcommand(1);
  UNetParams unet;
  std::string unet_out;
  auto* gen_unet = generate->add_subcommand("unet", "3D U-Net");
  std::vector<std::int64_t> dims(unet.dims.begin(), unet.dims.end());
  gen_unet->add_option("--dims", dims, "input volume (three values)")->expected(3);
  gen_unet->add_option("--in-channels", unet.in_channels);
  gen_unet->add_option("--base-filters", unet.base_filters);
  gen_unet->add_option("--depth", unet.depth);
  gen_unet->add_option("--convs-per-level", unet.convs_per_level);
  gen_unet->add_option("--elem-bytes", unet.elem_bytes);
  gen_unet->add_option("-o,--output", unet_out, "graph file")->required();
  int chain_n = 8;
  std::string chain_bytes = "1MiB";
  double chain_cost = 1.0;
  std::string chain_out;
  auto* gen_chain_cmd = generate->add_subcommand("chain", "linear chain");
  gen_chain_cmd->add_option("--n", chain_n, "number of ops");
  gen_chain_cmd->add_option("--bytes", chain_bytes, "bytes per tensor");
  gen_chain_cmd->add_option("--cost", chain_cost, "cost units per op");
  gen_chain_cmd->add_option("-o,--output", chain_out, "graph file")->required();

  auto* rewrite = app.add_subcommand("rewrite", "expand for training and insert swap or recompute nodes");
  std::string rewrite_in, rewrite_out, plan_out;
  RewriteFlags rewrite_flags;
  ExpandFlags rewrite_expand;
  rewrite->add_option("graph", rewrite_in, "forward or expanded graph")->required();
  rewrite_flags.add(rewrite);
  rewrite_expand.add(rewrite);
  rewrite->add_option("-o,--output", rewrite_out, "rewritten graph file")->required();
  rewrite->add_option("--plan-out", plan_out, "plan file (default <output>.plan.json)");

  auto* simulate_cmd = app.add_subcommand("simulate", "simulate one training iteration");
  std::string sim_graph, sim_plan, scenario, trace, report;
  RewriteFlags sim_rewrite;
  ExpandFlags sim_expand;
  SimFlags sim_flags;
  simulate_cmd->add_option("graph", sim_graph, "forward, expanded or rewritten graph");
  simulate_cmd->add_option("plan", sim_plan, "plan written by rewrite");
  simulate_cmd->add_option("--scenario", scenario, "scenario file");
  sim_rewrite.add(simulate_cmd);
  sim_expand.add(simulate_cmd);
  sim_flags.add(simulate_cmd);
  simulate_cmd->add_option("--trace", trace, "Chrome trace output");
  simulate_cmd->add_option("--report", report, "JSON report output");

  auto* sweep_cmd = app.add_subcommand("sweep", "simulate a grid of rewrite settings");
  std::string sweep_graph, presets, sweep_mode, n_list, lb_list, bw_list, sweep_out, sweep_json;
  ExpandFlags sweep_expand;
  SimFlags sweep_sim;
  sweep_cmd->add_option("graph", sweep_graph, "forward or expanded graph")->required();
  sweep_cmd->add_option("--presets", presets, "comma-separated preset names, or 'all'");
  sweep_cmd->add_option("--mode", sweep_mode, "mode for the custom grid (default swap)");
  sweep_cmd->add_option("--n-tensors", n_list, "comma-separated n_tensors values");
  sweep_cmd->add_option("--lb", lb_list, "comma-separated lb values");
  sweep_cmd->add_option("--bw", bw_list, "comma-separated link bandwidths (both directions)");
  sweep_cmd->add_option("-o,--output", sweep_out, "text table output");
  sweep_cmd->add_option("--json", sweep_json, "JSON table output");
  sweep_expand.add(sweep_cmd);
  sweep_sim.add(sweep_cmd);

  auto* verify = app.add_subcommand("verify", "run the semantic and simulator property suites");
  std::string seeds;
  std::size_t instances = 200;
  std::uint64_t graph_seed = 2026;
  std::string inject;
  verify->add_option("--seeds", seeds, "numeric seeds: 'a..b' or a comma list (default 1..20)");
  verify->add_option("--instances", instances, "randomized graphs per property");
  verify->add_option("--graph-seed", graph_seed, "seed for the randomized graphs");
  verify->add_option("--inject", inject, "broken-swap: add a plan that bypasses swap_in");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (gen_unet->parsed()) {
      std::copy(dims.begin(), dims.end(), unet.dims.begin());
      return run_generate_unet(unet, unet_out);
    }
    if (gen_chain_cmd->parsed()) return run_generate_chain(chain_n, chain_bytes, chain_cost, chain_out);
    if (rewrite->parsed()) return run_rewrite(rewrite_in, rewrite_flags, rewrite_expand, rewrite_out, plan_out);
    if (simulate_cmd->parsed()) {
      return run_simulate(sim_graph, sim_plan, scenario, sim_rewrite, sim_expand, sim_flags, trace, report);
    }
    if (sweep_cmd->parsed()) {
      return run_sweep(sweep_graph, sweep_expand, sweep_sim, presets, sweep_mode, n_list, lb_list, bw_list, sweep_out,
                       sweep_json);
    }
    if (verify->parsed()) return run_verify(seeds, instances, graph_seed, inject);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDomainError;
  }
  return kUsageError;
}
