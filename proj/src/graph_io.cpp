// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/graph_io.hpp"

#include <fstream>
#include <sstream>

namespace swapsim {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw GraphError(std::string("missing key '") + key + "' in " + where);
  }
  return obj.at(key);
}

template <typename T>
T get_as(const json& obj, const char* key, const char* where) {
  try {
    return require(obj, key, where).get<T>();
  } catch (const json::type_error& e) {
    throw GraphError(std::string("bad value for '") + key + "' in " + where + ": " + e.what());
  }
}

}  // namespace

json graph_to_json(const GraphSpec& in) {
  GraphSpec g = canonicalize(in);
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json j{{"id", n.id},
           {"kind", to_string(n.kind)},
           {"inputs", n.inputs},
           {"outputs", n.outputs},
           {"cost_units", n.cost_units},
           {"scope", n.scope},
           {"phase", to_string(n.phase)}};
    if (!n.origin.empty()) j["origin"] = n.origin;
    nodes.push_back(std::move(j));
  }
  json tensors = json::array();
  for (const auto& t : g.tensors) {
    tensors.push_back({{"id", t.id},
                       {"producer", t.producer},
                       {"shape", t.shape},
                       {"channels", t.channels},
                       {"elem_bytes", t.elem_bytes},
                       {"scope", t.scope}});
  }
  json edges = json::array();
  for (const auto& e : g.control_edges) edges.push_back({{"from", e.from}, {"to", e.to}});
  return {{"version", kGraphFormatVersion},
          {"nodes", std::move(nodes)},
          {"tensors", std::move(tensors)},
          {"control_edges", std::move(edges)},
          {"metadata", g.metadata}};
}

GraphSpec graph_from_json(const json& doc) {
  if (!doc.is_object()) throw GraphError("graph document must be an object");
  int version = get_as<int>(doc, "version", "graph");
  if (version != kGraphFormatVersion) {
    throw GraphError("unsupported graph format version " + std::to_string(version) + " (expected " +
                     std::to_string(kGraphFormatVersion) + ")");
  }
  GraphSpec g;
  for (const auto& j : require(doc, "nodes", "graph")) {
    NodeSpec n;
    n.id = get_as<std::string>(j, "id", "node");
    auto kind_name = get_as<std::string>(j, "kind", "node");
    auto kind = parse_node_kind(kind_name);
    if (!kind) throw GraphError("unknown node kind '" + kind_name + "' on node '" + n.id + "'");
    n.kind = *kind;
    auto phase_name = get_as<std::string>(j, "phase", "node");
    auto phase = parse_phase(phase_name);
    if (!phase) throw GraphError("unknown phase '" + phase_name + "' on node '" + n.id + "'");
    n.phase = *phase;
    n.inputs = get_as<std::vector<std::string>>(j, "inputs", "node");
    n.outputs = get_as<std::vector<std::string>>(j, "outputs", "node");
    n.cost_units = get_as<double>(j, "cost_units", "node");
    n.scope = get_as<std::string>(j, "scope", "node");
    if (j.contains("origin")) n.origin = get_as<std::string>(j, "origin", "node");
    g.nodes.push_back(std::move(n));
  }
  for (const auto& j : require(doc, "tensors", "graph")) {
    TensorDesc t;
    t.id = get_as<std::string>(j, "id", "tensor");
    t.producer = get_as<std::string>(j, "producer", "tensor");
    t.shape = get_as<std::vector<std::int64_t>>(j, "shape", "tensor");
    t.channels = get_as<std::int64_t>(j, "channels", "tensor");
    t.elem_bytes = get_as<std::int64_t>(j, "elem_bytes", "tensor");
    t.scope = get_as<std::string>(j, "scope", "tensor");
    g.tensors.push_back(std::move(t));
  }
  for (const auto& j : require(doc, "control_edges", "graph")) {
    g.control_edges.push_back({get_as<std::string>(j, "from", "control edge"),
                               get_as<std::string>(j, "to", "control edge")});
  }
  g.metadata = get_as<std::map<std::string, std::string>>(doc, "metadata", "graph");
  return canonicalize(std::move(g));
}

std::string dump_document(const json& doc) { return doc.dump(2) + "\n"; }

json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("malformed document: ") + e.what());
  }
}

std::string serialize_graph(const GraphSpec& g) { return dump_document(graph_to_json(g)); }

GraphSpec parse_graph(std::string_view text) { return graph_from_json(parse_document(text)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GraphError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw GraphError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw GraphError("write to '" + path.string() + "' failed");
}

void save_graph(const GraphSpec& g, const std::filesystem::path& path) {
  write_text_file(path, serialize_graph(g));
}

GraphSpec load_graph(const std::filesystem::path& path) { return parse_graph(read_text_file(path)); }

}  // namespace swapsim
