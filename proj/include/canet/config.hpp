// Copyright 2026 The CANet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CANET_CONFIG_HPP_
#define CANET_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace canet {

/// One `key = value` line. Keys before any [section] land in section "".
struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

/// INI-style text: [section] headers, `key = value`, `#`/`;` comments.
/// Malformed lines and repeated keys throw ErrorCode::kConfig.
std::vector<ConfigEntry> parse_config_text(const std::string& text);
std::vector<ConfigEntry> parse_config_file(const std::string& path);

/// Typed value parsers; the key is only used in error messages.
std::int64_t parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
/// Comma separated, whitespace trimmed, empty items rejected.
std::vector<std::string> parse_list(const std::string& key,
                                    const std::string& value);

std::string trim(const std::string& s);
/// Shortest text that parses back to the same double.
std::string format_real(double v);

}  // namespace canet

#endif  // CANET_CONFIG_HPP_
