// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// The poslab command line: train, eval, probe, shuffle, ablate, mlm, report.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poslab/training.hpp"

namespace poslab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// File values, then `key=value` overrides on top. Unknown keys and
/// malformed values are UsageErrors; with require_corpus a missing corpus is
/// a UsageError naming the key.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         std::span<const std::string> overrides, bool require_corpus = true);

/// Runs one invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poslab::cli
