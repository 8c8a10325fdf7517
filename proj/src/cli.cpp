// SPDX-License-Identifier: Apache-2.0
#include "parley/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parley/error.hpp"
#include "parley/evaluation.hpp"
#include "parley/scenario.hpp"
#include "parley/stats.hpp"
#include "parley/transcript.hpp"
#include "parley/version.hpp"

namespace parley::cli {

namespace {

// Calls work(i) for every i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& work) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i)
            work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++)
                work(i);
        });
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
    glob_t result{};
    std::vector<std::filesystem::path> paths;
    if (::glob(pattern.c_str(), 0, nullptr, &result) == 0) {
        for (std::size_t i = 0; i < result.gl_pathc; ++i)
            paths.emplace_back(result.gl_pathv[i]);
    }
    ::globfree(&result);
    std::sort(paths.begin(), paths.end());
    return paths;
}

struct SessionOutcome {
    std::string status = "Failed";
    int turns = 0;
    std::optional<std::string> failure;
};

SessionOutcome run_one(const SessionConfig& config, const Scenario& scenario, const std::filesystem::path& out_dir) {
    SessionOutcome outcome;
    const auto transcript_path = out_dir / (config.session_id + ".transcript.jsonl");
    const auto calls_path = out_dir / (config.session_id + ".calls.jsonl");
    auto log = std::make_shared<CallLog>();
    try {
        ModelClient client(make_backend(config.backend), config.routing, config.backend.concurrency, log);
        client.set_session_tag(config.session_id);

        Transcript header;
        header.session_id = config.session_id;
        header.scenario_title = scenario.title;
        header.condition = config.condition;
        header.seed = config.seed;
        header.turn_budget = config.turn_budget;
        header.history_window_k = config.history_window_k;
        header.retrieval_top_l = config.retrieval_top_l;
        header.memory_mode = config.memory_mode;
        header.call_log_ref = calls_path.filename().string();
        header.created_at = current_timestamp();
        header.tool_version = std::string(tool_version);

        TranscriptWriter writer(transcript_path, header);
        auto t = run_session(scenario, engine_options(config), client,
                             [&](const TurnRecord& r) { writer.write_turn(r); });
        writer.finish(t);
        outcome.turns = static_cast<int>(t.records.size());
        outcome.status = std::string(to_string(t.status));
        if (t.failure) outcome.failure = fmt::format("turn {}: {}", t.failure->turn_index + 1, t.failure->message);
    } catch (const std::exception& e) {
        outcome.failure = e.what();
        spdlog::error("{}: {}", config.session_id, e.what());
    }
    try {
        log->write_jsonl(calls_path);
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", config.session_id, e.what());
    }
    return outcome;
}

} // namespace

int cmd_run(const RunOptions& options, std::ostream& err) {
    ExperimentPlan plan;
    Scenario scenario;
    try {
        plan = load_plan(options.plan_path);
        if (options.backend) plan.backend = apply_backend_flag(plan.backend, *options.backend);
        if (options.seed_override) plan.base_seed = *options.seed_override;
        scenario = load_scenario(plan.scenario_path);
        std::filesystem::create_directories(options.out_dir);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return UsageError;
    }

    if (plan.backend.kind == BackendKind::Live) {
        try {
            make_backend(plan.backend)->preflight();
        } catch (const AuthError& e) {
            err << "error: " << e.what() << "\n";
            return UsageError;
        } catch (const std::exception& e) {
            spdlog::warn("backend preflight failed: {}", e.what());
        }
    }

    const auto configs = expand_plan(plan);
    std::vector<SessionOutcome> outcomes(configs.size());
    spdlog::info("running {} sessions with concurrency {}", configs.size(), options.concurrency);
    parallel_for(configs.size(), options.concurrency, [&](std::size_t i) {
        outcomes[i] = run_one(configs[i], scenario, options.out_dir);
        spdlog::info("{}: {} ({} turns)", configs[i].session_id, outcomes[i].status, outcomes[i].turns);
    });

    json sessions = json::array();
    int complete = 0;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& c = configs[i];
        const auto& o = outcomes[i];
        if (o.status == "Complete") ++complete;
        sessions.push_back(json{{"session_id", c.session_id},
                                {"condition", to_string(c.condition)},
                                {"run_index", c.run_index},
                                {"seed", c.seed},
                                {"status", o.status},
                                {"turns", o.turns},
                                {"transcript", c.session_id + ".transcript.jsonl"},
                                {"call_log", c.session_id + ".calls.jsonl"},
                                {"failure", o.failure ? json(*o.failure) : json(nullptr)}});
    }
    const int failed = static_cast<int>(configs.size()) - complete;
    json manifest{{"schema_version", 1},
                  {"tool_version", tool_version},
                  {"created_at", current_timestamp()},
                  {"plan", plan_to_json(plan)},
                  {"session_count", configs.size()},
                  {"complete", complete},
                  {"failed", failed},
                  {"sessions", sessions}};
    try {
        write_json(options.out_dir / "batch_manifest.json", manifest);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return PartialFailure;
    }
    if (failed > 0) {
        err << fmt::format("{} of {} sessions failed; see batch_manifest.json\n", failed, configs.size());
        return PartialFailure;
    }
    return Success;
}

namespace {

struct EvaluationConfig {
    BackendConfig backend;
    RoutingTable routing;
};

EvaluationConfig evaluation_config(const EvaluateOptions& options) {
    EvaluationConfig c;
    if (options.config_path) {
        const auto j = read_json(*options.config_path);
        const auto base = options.config_path->parent_path();
        if (j.contains("backend")) c.backend = parse_backend_config(j.at("backend"), base);
        if (j.contains("routing")) c.routing = j.at("routing").get<RoutingTable>();
    }
    if (options.backend) c.backend = apply_backend_flag(c.backend, *options.backend);
    return c;
}

struct EvaluationOutcome {
    std::optional<TranscriptEvaluation> result;
    std::optional<Condition> condition;
    std::string session_id;
    std::string reason;
};

EvaluationOutcome evaluate_one(const std::filesystem::path& path, const EvaluationConfig& config,
                               const EvaluateOptions& options) {
    EvaluationOutcome outcome;
    outcome.session_id = path.filename().string();
    Transcript t;
    try {
        t = read_transcript(path);
    } catch (const std::exception& e) {
        outcome.reason = e.what();
        return outcome;
    }
    outcome.session_id = t.session_id;
    outcome.condition = t.condition;
    if (t.status != TranscriptStatus::Complete) {
        outcome.reason = "transcript is incomplete";
        return outcome;
    }
    auto log = std::make_shared<CallLog>();
    try {
        ModelClient client(make_backend(config.backend), config.routing, config.backend.concurrency, log);
        client.set_session_tag(t.session_id);
        TranscriptEvaluation r;
        r.session_id = t.session_id;
        r.condition = t.condition;
        r.annotations = analyze_breakdowns(t, client, EvaluationOptions{options.per_turn_breakdown});
        r.scores = judge_transcript(t, client);
        outcome.result = std::move(r);
    } catch (const std::exception& e) {
        outcome.reason = e.what();
    }
    try {
        std::filesystem::create_directories(options.out_dir / "calls");
        log->write_jsonl(options.out_dir / "calls" / (t.session_id + ".calls.jsonl"));
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", t.session_id, e.what());
    }
    return outcome;
}

} // namespace

int cmd_evaluate(const EvaluateOptions& options, std::ostream& err) {
    const auto paths = expand_glob(options.transcript_glob);
    if (paths.empty()) {
        err << "error: no transcripts match '" << options.transcript_glob << "'\n";
        return UsageError;
    }
    EvaluationConfig config;
    try {
        config = evaluation_config(options);
        std::filesystem::create_directories(options.out_dir / "annotations");
        if (config.backend.kind == BackendKind::Live) make_backend(config.backend)->preflight();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return UsageError;
    }

    std::vector<EvaluationOutcome> outcomes(paths.size());
    parallel_for(paths.size(), options.concurrency,
                 [&](std::size_t i) { outcomes[i] = evaluate_one(paths[i], config, options); });

    std::vector<TranscriptEvaluation> results;
    std::map<Condition, int> excluded_by_condition;
    json excluded = json::array();
    std::string scores;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        auto& o = outcomes[i];
        if (!o.result) {
            spdlog::warn("excluded {}: {}", o.session_id, o.reason);
            if (o.condition) ++excluded_by_condition[*o.condition];
            excluded.push_back(json{{"session_id", o.session_id},
                                    {"path", paths[i].string()},
                                    {"condition", o.condition ? json(to_string(*o.condition)) : json(nullptr)},
                                    {"reason", o.reason}});
            continue;
        }
        const auto& r = *o.result;
        std::string annotations;
        for (const auto& a : r.annotations) {
            json line = a;
            line["session_id"] = r.session_id;
            annotations += line.dump() + "\n";
        }
        try {
            write_text(options.out_dir / "annotations" / (r.session_id + ".annotations.jsonl"), annotations);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return PartialFailure;
        }
        scores += json{{"session_id", r.session_id},
                       {"condition", to_string(r.condition)},
                       {"coherence", r.scores.coherence},
                       {"cooperativeness", r.scores.cooperativeness},
                       {"diversity", r.scores.diversity},
                       {"breakdown_count", r.breakdown_count()}}
                      .dump() +
                  "\n";
        results.push_back(std::move(*o.result));
    }

    AggregateReport report;
    for (auto condition : {Condition::Equal, Condition::SelfSelect, Condition::CurrentSelectsNext}) {
        const bool any = std::any_of(results.begin(), results.end(), [&](const auto& r) { return r.condition == condition; });
        if (!any) continue;
        report.conditions.push_back(aggregate_condition(results, condition, excluded_by_condition[condition]));
        const auto& summary = report.conditions.back();
        if (summary.evaluable_fraction() < min_evaluable_fraction)
            err << fmt::format("warning: only {:.0f}% of {} transcripts were evaluable\n",
                               100.0 * summary.evaluable_fraction(), to_string(condition));
    }
    try {
        write_text(options.out_dir / "scores.jsonl", scores);
        write_json(options.out_dir / "excluded.json", excluded);
        write_json(options.out_dir / "aggregate.json", aggregate_to_json(report));
        write_text(options.out_dir / "aggregate.csv", aggregate_to_csv(report));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return PartialFailure;
    }
    if (!excluded.empty()) {
        err << fmt::format("{} of {} transcripts excluded; see excluded.json\n", excluded.size(), paths.size());
        return PartialFailure;
    }
    return Success;
}

int cmd_stats(const std::filesystem::path& aggregate_path, const std::filesystem::path& out_path, std::ostream& err) {
    AggregateReport report;
    try {
        report = aggregate_from_json(read_json(aggregate_path));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return UsageError;
    }
    if (report.conditions.size() < 2) {
        err << "error: statistics need at least two conditions, found " << report.conditions.size() << "\n";
        return UsageError;
    }

    json metrics = json::array();
    for (auto metric : all_metrics()) {
        const std::string name(metric);
        stats::GroupedSamples samples;
        json groups = json::array();
        for (const auto& c : report.conditions) {
            const auto it = c.metrics.find(name);
            stats::Group g{std::string(to_string(c.condition)), {}};
            if (it != c.metrics.end()) g.values = it->second.values;
            groups.push_back(json{{"condition", g.label},
                                  {"n", g.values.size()},
                                  {"median", it != c.metrics.end() ? json(it->second.median) : json(nullptr)}});
            samples.push_back(std::move(g));
        }
        json entry{{"metric", name}, {"test", "kruskal_wallis"}, {"groups", groups}};
        try {
            const auto omnibus = stats::kruskal_wallis(samples);
            entry["applicable"] = true;
            entry["statistic"] = omnibus.statistic;
            entry["df"] = omnibus.degrees_of_freedom;
            entry["p"] = omnibus.p_value;
            json pairwise = json::array();
            for (const auto& p : stats::dunn_test(samples, stats::Correction::Bonferroni))
                pairwise.push_back(json{{"pair", {p.first, p.second}}, {"z", p.z}, {"p_raw", p.p_raw}, {"p_adj", p.p_adjusted}});
            entry["pairwise"] = pairwise;
        } catch (const NotApplicable& e) {
            entry["applicable"] = false;
            entry["reason"] = e.what();
        } catch (const std::invalid_argument& e) {
            entry["applicable"] = false;
            entry["reason"] = e.what();
        }
        metrics.push_back(std::move(entry));
    }
    json evaluable = json::object();
    for (const auto& c : report.conditions)
        evaluable[std::string(to_string(c.condition))] = c.evaluable_fraction();
    json out{{"schema_version", 1},
             {"method",
              {{"omnibus", "kruskal_wallis"},
               {"ranks", "midranks"},
               {"tie_correction", true},
               {"posthoc", "dunn"},
               {"posthoc_variance", "tie_corrected"},
               {"sidedness", "two_sided"},
               {"correction", "bonferroni"}}},
             {"evaluable_fraction", evaluable},
             {"min_evaluable_fraction", min_evaluable_fraction},
             {"metrics", metrics}};
    try {
        if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
        write_json(out_path, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return PartialFailure;
    }
    return Success;
}

int cmd_replay(const std::filesystem::path& transcript_path, bool verbose, std::ostream& out, std::ostream& err) {
    try {
        out << render_transcript(read_transcript(transcript_path), verbose);
    } catch (const std::exception& e) {
        err << "error: " << transcript_path.string() << ": " << e.what() << "\n";
        return UsageError;
    }
    return Success;
}

} // namespace parley::cli
