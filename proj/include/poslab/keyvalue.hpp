// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` text blocks with dotted namespaces. Used for run
// configs, the config block inside checkpoints and experiment manifests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace poslab {

/// Ordered by key so formatting is deterministic.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; surrounding whitespace is trimmed. A line without '=' or a
/// repeated key is a UsageError mentioning `origin` and the line number.
KeyValues parse_key_values(std::string_view text, std::string_view origin = "<text>");

/// One `key = value` line per entry, sorted by key.
std::string format_key_values(const KeyValues& kv);

KeyValues read_key_value_file(const std::filesystem::path& path);

/// Splits "key=value" (as given to --set). Throws UsageError without '='.
std::pair<std::string, std::string> split_assignment(std::string_view text);

std::string trim(std::string_view s);

/// Typed accessors; malformed values raise UsageError naming the key.
std::int64_t kv_int(const KeyValues& kv, const std::string& key);
double kv_double(const KeyValues& kv, const std::string& key);
bool kv_bool(const KeyValues& kv, const std::string& key);

/// Shortest round-trip text for a double (so a stored config re-reads to the
/// same bits).
std::string format_double(double v);

/// Closest candidate by edit distance, or empty when nothing is close.
std::string closest_match(std::string_view word, const std::vector<std::string>& candidates);

}  // namespace poslab
