// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "swapsim/units.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

namespace swapsim {

std::uint64_t parse_byte_size(std::string_view text) {
  constexpr std::array<std::pair<std::string_view, double>, 10> kUnits{{
      {"B", 1.0},
      {"KiB", 1024.0},
      {"MiB", 1024.0 * 1024},
      {"GiB", 1024.0 * 1024 * 1024},
      {"TiB", 1024.0 * 1024 * 1024 * 1024},
      {"KB", 1e3},
      {"kB", 1e3},
      {"MB", 1e6},
      {"GB", 1e9},
      {"TB", 1e12},
  }};
  auto bad = [&] { return std::invalid_argument("bad byte size '" + std::string(text) + "'"); };
  double value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || value < 0 || !std::isfinite(value)) throw bad();
  std::string_view rest(end, text.data() + text.size() - end);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  double scale = 1.0;
  if (!rest.empty()) {
    bool found = false;
    for (const auto& [name, s] : kUnits) {
      if (rest == name) {
        scale = s;
        found = true;
      }
    }
    if (!found) throw bad();
  }
  const double bytes = std::round(value * scale);
  if (bytes > 1.8e19) throw bad();
  return static_cast<std::uint64_t>(bytes);
}

std::string format_bytes(std::uint64_t bytes) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f GiB (%.2f GB)", static_cast<double>(bytes) / (1024.0 * 1024 * 1024),
                static_cast<double>(bytes) / 1e9);
  return buf;
}

}  // namespace swapsim
