// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "parley/cli.hpp"
#include "parley/version.hpp"

namespace {

void configure_logging(int verbosity) {
    auto logger = spdlog::stderr_color_mt("parley");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    switch (verbosity) {
    case 0:
        spdlog::set_level(spdlog::level::warn);
        break;
    case 1:
        spdlog::set_level(spdlog::level::info);
        break;
    default:
        spdlog::set_level(spdlog::level::debug);
        break;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent dialogue runner, evaluator and statistics"};
    app.set_version_flag("--version", std::string(parley::tool_version));
    app.require_subcommand(1);
    int verbosity = 0;
    app.add_option("--verbosity", verbosity, "0 warnings, 1 progress, 2 debug")->check(CLI::Range(0, 2));

    parley::cli::RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run every session of an experiment plan");
    run_cmd->add_option("--plan", run.plan_path, "Experiment plan JSON")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run.out_dir, "Output directory")->required();
    run_cmd->add_option("--backend", run.backend, "live | scripted:<path>");
    run_cmd->add_option("--concurrency", run.concurrency, "Sessions run in parallel")->check(CLI::PositiveNumber);
    run_cmd->add_option("--seed-override", run.seed_override, "Replace the plan's base seed");

    parley::cli::EvaluateOptions eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "Breakdown analysis and judge scores for transcripts");
    eval_cmd->add_option("transcripts", eval.transcript_glob, "Transcript glob, e.g. 'out/*.transcript.jsonl'")
        ->required();
    eval_cmd->add_option("--out", eval.out_dir, "Output directory")->required();
    eval_cmd->add_option("--backend", eval.backend, "live | scripted:<path>");
    eval_cmd->add_option("--config", eval.config_path, "JSON with backend and routing sections")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--concurrency", eval.concurrency, "Transcripts evaluated in parallel")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--per-turn", eval.per_turn_breakdown, "One breakdown judge call per turn");

    std::filesystem::path aggregate_path;
    std::filesystem::path stats_out;
    auto* stats_cmd = app.add_subcommand("stats", "Kruskal-Wallis and Dunn tests over an aggregate report");
    stats_cmd->add_option("aggregate", aggregate_path, "aggregate.json from evaluate")->required();
    stats_cmd->add_option("--out", stats_out, "Stats report JSON")->required();

    std::filesystem::path replay_path;
    bool replay_verbose = false;
    auto* replay_cmd = app.add_subcommand("replay", "Render a transcript for reading");
    replay_cmd->add_option("transcript", replay_path, "Transcript JSONL")->required();
    replay_cmd->add_flag("-v,--verbose", replay_verbose, "Include every agent's think output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : parley::cli::UsageError;
    }
    configure_logging(verbosity);

    if (*run_cmd) {
        run.verbosity = verbosity;
        return parley::cli::cmd_run(run, std::cerr);
    }
    if (*eval_cmd) {
        eval.verbosity = verbosity;
        return parley::cli::cmd_evaluate(eval, std::cerr);
    }
    if (*stats_cmd) return parley::cli::cmd_stats(aggregate_path, stats_out, std::cerr);
    return parley::cli::cmd_replay(replay_path, replay_verbose, std::cout, std::cerr);
}
