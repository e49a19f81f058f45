// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// `key = value` text used by config files and checkpoint headers.

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace yogo {

using KeyValues = std::map<std::string, std::string>;

/// Parses one `key = value` pair per line; blank lines and `#` comments are skipped.
KeyValues parse_key_values(std::istream& in, const std::string& source);
KeyValues load_key_values(const std::string& path);

/// Shortest round-trippable decimal form (17 significant digits).
std::string format_double(double value);

std::size_t kv_size(const KeyValues& kv, const std::string& key, std::size_t fallback);
std::uint64_t kv_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback);
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<std::size_t> kv_size_list(const KeyValues& kv, const std::string& key,
                                      const std::vector<std::size_t>& fallback);

std::string join_sizes(const std::vector<std::size_t>& values);

}  // namespace yogo
