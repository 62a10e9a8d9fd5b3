// Copyright 2026 The swapsim Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace swapsim {

// "16GiB", "512 MiB", "1.5GB", "4096". IEC suffixes are powers of 1024, SI
// suffixes powers of 1000; a bare number is bytes. Throws std::invalid_argument.
std::uint64_t parse_byte_size(std::string_view text);

// "12.50 GiB (13.42 GB)".
std::string format_bytes(std::uint64_t bytes);

}  // namespace swapsim
