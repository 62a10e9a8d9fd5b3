// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <regex>
#include <string>

#include "doctest.h"
#include "swapsim/graph_io.hpp"
#include "swapsim/plan.hpp"

#ifndef SWAPSIM_CLI
#error "SWAPSIM_CLI must name the swapsim binary"
#endif

using namespace swapsim;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "swapsim_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

Run cli(const std::string& args) {
  const std::string cmd = "cd '" + workdir().string() + "' && '" SWAPSIM_CLI "' " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

double number_after(const std::string& text, const std::string& label) {
  std::smatch m;
  REQUIRE(std::regex_search(text, m, std::regex(label + R"(\s*([0-9.eE+-]+))")));
  return std::stod(m[1]);
}

// Default-granularity U-Net at 192^3 and the fine-grained one used for the
// full-size scenarios; both generated once.
const std::string& unet192() {
  static const std::string path = [] {
    auto r = cli("generate unet --dims 192 192 192 --in-channels 4 --depth 5 -o g192.json");
    REQUIRE(r.code == 0);
    return at("g192.json");
  }();
  return path;
}

const std::string& fine192() {
  static const std::string path = [] {
    auto r = cli("generate unet --dims 192 192 192 --convs-per-level 31 --base-filters 6 -o fine192.json");
    REQUIRE(r.code == 0);
    return at("fine192.json");
  }();
  return path;
}

}  // namespace

TEST_CASE("generate") {
  const auto& g = unet192();
  CHECK(fs::exists(g));
  CHECK(load_graph(g).metadata.at("dims") == "192x192x192");

  auto r = cli("generate chain --n 8 -o c.json");
  CHECK(r.code == 0);
  CHECK(load_graph(at("c.json")).nodes.size() == 8);

  r = cli("generate unet --dims 100 100 100 --depth 5 -o bad.json");
  CHECK(r.code == 1);
  CHECK(r.output.find("dim x=100") != std::string::npos);
  CHECK_FALSE(fs::exists(at("bad.json")));

  r = cli("generate unet --dims 192 192 -o bad.json");
  CHECK(r.code == 2);
  r = cli("generate unet --depth 5");
  CHECK(r.code == 2);
  r = cli("frobnicate");
  CHECK(r.code == 2);
}

TEST_CASE("rewrite") {
  const auto& g = unet192();
  auto r = cli("rewrite " + g + " --preset paper-c4 -o c4.json --plan-out c4.plan.json");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("static peak") != std::string::npos);
  const auto plan = load_plan(at("c4.plan.json"));
  CHECK(plan.lb == 20);
  CHECK_FALSE(plan.swapped.empty());
  for (const auto& s : plan.swapped) CHECK_FALSE(s.tensor.starts_with("synthesis/"));

  r = cli("rewrite " + g + " --mode none -o none.json --plan-out none.plan.json");
  REQUIRE(r.code == 0);
  CHECK(load_plan(at("none.plan.json")).swapped.empty());

  r = cli("rewrite " + g + " --n-tensors 500 --lb 1 -o n500.json --plan-out n500.plan.json");
  REQUIRE(r.code == 0);
  const auto all = cli("rewrite " + g + " --mode swap -o all.json --plan-out all.plan.json");
  REQUIRE(all.code == 0);
  const auto candidates = load_plan(at("all.plan.json")).swapped.size();
  CHECK(load_plan(at("n500.plan.json")).swapped.size() == std::min<std::size_t>(500, candidates));

  r = cli("rewrite " + g + " --fine " + fine192() + " -o x.json");
  CHECK(r.code == 2);
  r = cli("rewrite " + g + " --preset paper-c9 -o x.json");
  CHECK(r.code == 1);
  r = cli("rewrite " + g + " --mode swap --lb 0 -o x.json");
  CHECK(r.code == 1);
  r = cli("rewrite missing.json --mode swap -o x.json");
  CHECK(r.code == 1);

  // reruns are byte-identical
  REQUIRE(cli("rewrite " + g + " --preset paper-c4 -o c4b.json --plan-out c4b.plan.json").code == 0);
  CHECK(read_text_file(at("c4.json")) == read_text_file(at("c4b.json")));
  CHECK(read_text_file(at("c4.plan.json")) == read_text_file(at("c4b.plan.json")));
}

TEST_CASE("simulate") {
  const auto& g = unet192();
  REQUIRE(cli("rewrite " + g + " --preset paper-c1 -o c1.json --plan-out c1.plan.json").code == 0);
  auto fast = cli("simulate c1.json c1.plan.json --compute-rate 1e13 --d2h-bw 40e9 --h2d-bw 40e9 --trace t.json "
                      "--report rep.json");
  REQUIRE(fast.code == 0);
  const auto trace = parse_document(read_text_file(at("t.json")));
  REQUIRE(trace.is_array());
  CHECK(trace.size() > 0);
  CHECK(trace[0].at("ph") == "X");
  CHECK(parse_document(read_text_file(at("rep.json"))).contains("makespan"));

  auto slow = cli("simulate c1.json c1.plan.json --compute-rate 1e13 --d2h-bw 16e9 --h2d-bw 16e9");
  REQUIRE(slow.code == 0);
  CHECK(number_after(slow.output, "makespan:") > number_after(fast.output, "makespan:"));

  auto preset = cli("simulate " + g + " --preset paper-c1 --compute-rate 1e13 --link pcie3");
  REQUIRE(preset.code == 0);
  CHECK(number_after(preset.output, "makespan:") == number_after(slow.output, "makespan:"));

  // the unrewritten fine-grained graph cannot fit 16 GiB
  auto over = cli("simulate " + fine192() + " --budget 16GiB --enforce-budget --compute-rate 1e13");
  CHECK(over.code == 1);
  CHECK((over.output.find("budget violation") != std::string::npos ||
         over.output.find("infeasible") != std::string::npos));
  // while the all-swap rewrite of the same graph does
  auto swapped = cli("simulate " + fine192() + " --preset paper-c1 --budget 16GiB --enforce-budget --compute-rate 1e13");
  CHECK(swapped.code == 0);

  CHECK(cli("simulate c1.json c1.plan.json --budget lots").code == 2);
  CHECK(cli("simulate c1.json c1.plan.json --preset paper-c2").code == 2);
  CHECK(cli("simulate").code == 2);
  CHECK(cli("simulate c1.json c1.plan.json --link carrier-pigeon").code != 0);

  const fs::path scen = fs::path(SWAPSIM_SCENARIO_DIR) / "chain_small.json";
  auto sc = cli("simulate --scenario '" + scen.string() + "'");
  CHECK(sc.code == 0);
  CHECK(fs::exists(at("chain_trace.json")));
  CHECK(fs::exists(at("chain_report.json")));
}

TEST_CASE("sweep") {
  const auto& g = unet192();
  auto r = cli("sweep " + g + " --presets all --compute-rate 1e13 --json sweep.json -o sweep.txt");
  REQUIRE(r.code == 0);
  CHECK(parse_document(read_text_file(at("sweep.json"))).size() == 4);
  CHECK(read_text_file(at("sweep.txt")).find("paper-c4") != std::string::npos);

  r = cli("sweep " + g + " --lb 1,5,20 --compute-rate 1e13 --bw 16e9 --json lb.json");
  REQUIRE(r.code == 0);
  const auto rows = parse_document(read_text_file(at("lb.json")));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].at("makespan").get<double>() <= rows[0].at("makespan").get<double>());
  CHECK(rows[2].at("makespan").get<double>() <= rows[1].at("makespan").get<double>());

  r = cli("sweep " + g + " --lb ''");
  CHECK(r.code == 2);
  r = cli("sweep " + g + " --presets ''");
  CHECK(r.code == 2);
}

TEST_CASE("verify") {
  auto r = cli("verify --instances 20");
  CHECK(r.code == 0);
  CHECK(r.output.find("FAIL") == std::string::npos);
  CHECK(r.output.find("PASS semantic equivalence") != std::string::npos);

  r = cli("verify --seeds 1..20 --instances 5");
  CHECK(r.code == 0);

  r = cli("verify --inject broken-swap --instances 5");
  CHECK(r.code == 1);
  CHECK(r.output.find("use-after-swap") != std::string::npos);
  CHECK(r.output.find("FAIL semantic equivalence") != std::string::npos);

  CHECK(cli("verify --seeds 9..3").code == 2);
  CHECK(cli("verify --inject gremlins").code == 2);
}
