// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "swapsim/graph.hpp"

namespace swapsim {

inline constexpr int kGraphFormatVersion = 1;

// Canonical document: sorted keys, nodes/tensors/control edges sorted by id.
nlohmann::json graph_to_json(const GraphSpec& g);
// Throws GraphError on schema problems (version, unknown kind, missing key).
GraphSpec graph_from_json(const nlohmann::json& doc);

std::string serialize_graph(const GraphSpec& g);
// Syntax errors are reported with line and column.
GraphSpec parse_graph(std::string_view text);

void save_graph(const GraphSpec& g, const std::filesystem::path& path);
GraphSpec load_graph(const std::filesystem::path& path);

// Shared by every structured-text writer: two-space indent, trailing newline.
std::string dump_document(const nlohmann::json& doc);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
nlohmann::json parse_document(std::string_view text);

}  // namespace swapsim
