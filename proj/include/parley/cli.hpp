// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace parley::cli {

enum ExitCode : int { Success = 0, PartialFailure = 1, UsageError = 2 };

struct RunOptions {
    std::filesystem::path plan_path;
    std::filesystem::path out_dir;
    // "live" or "scripted:<path>"; overrides the plan's backend section.
    std::optional<std::string> backend;
    std::size_t concurrency = 1;
    std::optional<std::uint64_t> seed_override;
    int verbosity = 0;
};

/// Runs every session of a plan; one transcript and one call log per session
/// plus batch_manifest.json.
int cmd_run(const RunOptions& options, std::ostream& err);

struct EvaluateOptions {
    std::string transcript_glob;
    std::filesystem::path out_dir;
    std::optional<std::string> backend;
    std::optional<std::filesystem::path> config_path;
    std::size_t concurrency = 1;
    bool per_turn_breakdown = false;
    int verbosity = 0;
};

/// Breakdown analysis and judge scores per transcript, then per-condition aggregates.
int cmd_evaluate(const EvaluateOptions& options, std::ostream& err);

/// Kruskal-Wallis and Dunn/Bonferroni for every metric of an aggregate report.
int cmd_stats(const std::filesystem::path& aggregate_path, const std::filesystem::path& out_path, std::ostream& err);

int cmd_replay(const std::filesystem::path& transcript_path, bool verbose, std::ostream& out, std::ostream& err);

} // namespace parley::cli
