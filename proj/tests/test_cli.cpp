// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdio>
#include <sstream>

#include "parley/cli.hpp"
#include "parley/evaluation.hpp"
#include "parley/transcript.hpp"
#include "support.hpp"

using namespace parley;
using parley::testing::fixture_dir;
using parley::testing::read_file;
using parley::testing::TempDir;
using parley::testing::test_fixture_dir;
using parley::testing::write_file;

namespace {

std::filesystem::path pipeline_dir() {
    return fixture_dir() / "pipeline";
}

// The shipped pipeline plan with fewer runs, written next to the test outputs.
std::filesystem::path write_plan(const TempDir& dir, int runs, const json& backend = nullptr) {
    auto plan = json::parse(read_file(pipeline_dir() / "plan.json"));
    plan["runs_per_condition"] = runs;
    plan["scenario_path"] = (fixture_dir() / "scenario" / "island_reunion.json").string();
    plan["backend"] = backend.is_null() ? json{{"kind", "scripted"},
                                               {"script_path", (pipeline_dir() / "session_script.json").string()}}
                                        : backend;
    const auto path = dir / "plan.json";
    write_file(path, plan.dump(2));
    return path;
}

int run_plan(const std::filesystem::path& plan, const std::filesystem::path& out, std::size_t concurrency = 2) {
    std::ostringstream err;
    cli::RunOptions o;
    o.plan_path = plan;
    o.out_dir = out;
    o.concurrency = concurrency;
    return cli::cmd_run(o, err);
}

int evaluate(const std::filesystem::path& runs, const std::filesystem::path& out,
             std::optional<std::filesystem::path> config = pipeline_dir() / "evaluate.json") {
    std::ostringstream err;
    cli::EvaluateOptions o;
    o.transcript_glob = (runs / "*.transcript.jsonl").string();
    o.out_dir = out;
    o.config_path = std::move(config);
    o.concurrency = 3;
    return cli::cmd_evaluate(o, err);
}

json read_json(const std::filesystem::path& p) {
    return json::parse(read_file(p));
}

std::size_t count_files(const std::filesystem::path& dir, const std::string& suffix) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().filename().string().ends_with(suffix)) ++n;
    return n;
}

ConditionSummary summary_from_values(Condition c, const json& metrics) {
    ConditionSummary s;
    s.condition = c;
    for (const auto& [name, values] : metrics.items()) {
        s.metrics[name] = summarize_metric(values.get<std::vector<double>>());
        s.evaluated = static_cast<int>(values.size());
    }
    return s;
}

} // namespace

TEST(CliRun, WritesTranscriptsCallLogsAndManifest) {
    TempDir dir;
    ASSERT_EQ(run_plan(write_plan(dir, 2), dir / "runs"), cli::Success);
    EXPECT_EQ(count_files(dir / "runs", ".transcript.jsonl"), 6u);
    EXPECT_EQ(count_files(dir / "runs", ".calls.jsonl"), 6u);
    const auto manifest = read_json(dir / "runs" / "batch_manifest.json");
    EXPECT_EQ(manifest.at("session_count"), 6);
    EXPECT_EQ(manifest.at("complete"), 6);
    for (const auto& s : manifest.at("sessions")) {
        EXPECT_EQ(s.at("status"), "Complete");
        const auto t = read_transcript(dir / "runs" / s.at("transcript").get<std::string>());
        EXPECT_EQ(t.records.size(), 10u);
        EXPECT_EQ(t.session_id, s.at("session_id"));
        EXPECT_EQ(to_string(t.condition), s.at("condition").get<std::string>());
    }
}

TEST(CliRun, RerunIsCanonicallyIdentical) {
    TempDir dir;
    const auto plan = write_plan(dir, 2);
    ASSERT_EQ(run_plan(plan, dir / "a", 1), cli::Success);
    ASSERT_EQ(run_plan(plan, dir / "b", 4), cli::Success);
    for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
        const auto name = e.path().filename();
        const bool is_log = name.string().ends_with(".calls.jsonl");
        EXPECT_EQ(canonical_file(e.path(), is_log), canonical_file(dir / "b" / name, is_log)) << name;
    }
}

TEST(CliRun, UnreachableBackendFailsSessions) {
    TempDir dir;
    const json live{{"kind", "live"},
                    {"base_url", "http://127.0.0.1:1/v1"},
                    {"api_key_env", "PARLEY_TEST_UNSET_KEY"},
                    {"max_attempts", 1},
                    {"initial_backoff_ms", 1},
                    {"timeout_s", 1}};
    EXPECT_EQ(run_plan(write_plan(dir, 1, live), dir / "runs"), cli::PartialFailure);
    const auto manifest = read_json(dir / "runs" / "batch_manifest.json");
    EXPECT_EQ(manifest.at("failed"), 3);
    for (const auto& s : manifest.at("sessions")) {
        EXPECT_NE(s.at("status"), "Complete");
        EXPECT_FALSE(s.at("failure").is_null());
    }
}

TEST(CliRun, BadPlanIsUsageError) {
    TempDir dir;
    write_file(dir / "plan.json", R"({"conditions": []})");
    EXPECT_EQ(run_plan(dir / "plan.json", dir / "runs"), cli::UsageError);
    EXPECT_EQ(run_plan(dir / "missing.json", dir / "runs"), cli::UsageError);
}

TEST(CliEvaluate, ScoresEveryTranscriptAndAggregates) {
    TempDir dir;
    ASSERT_EQ(run_plan(write_plan(dir, 2), dir / "runs"), cli::Success);
    ASSERT_EQ(evaluate(dir / "runs", dir / "eval"), cli::Success);
    EXPECT_EQ(count_files(dir / "eval" / "annotations", ".annotations.jsonl"), 6u);
    EXPECT_EQ(read_json(dir / "eval" / "excluded.json").size(), 0u);
    const auto report = aggregate_from_json(read_json(dir / "eval" / "aggregate.json"));
    ASSERT_EQ(report.conditions.size(), 3u);
    for (const auto& c : report.conditions) {
        EXPECT_EQ(c.evaluated, 2);
        for (const auto& [name, m] : c.metrics) {
            int mass = 0;
            for (const auto& [bin, n] : m.histogram)
                mass += n;
            EXPECT_EQ(mass, 2) << name;
        }
    }
    // cssn_or_ss-r001 is scripted with two breakdowns.
    bool found = false;
    std::istringstream scores(read_file(dir / "eval" / "scores.jsonl"));
    for (std::string line; std::getline(scores, line);) {
        const auto j = json::parse(line);
        if (j.at("session_id") == "cssn_or_ss-r001-s101") {
            found = true;
            EXPECT_EQ(j.at("breakdown_count"), 2);
        }
    }
    EXPECT_TRUE(found);
}

TEST(CliEvaluate, ExcludesUnusableJudgeOutput) {
    TempDir dir;
    ASSERT_EQ(run_plan(write_plan(dir, 2), dir / "runs"), cli::Success);
    auto script = json::parse(read_file(pipeline_dir() / "judge_script.json"));
    for (auto& q : script.at("queues"))
        if (q.at("session") == "ss-r001-s101" && q.at("purpose") == "judge_scores")
            q["responses"] = {"coherence: 9\ncooperativeness: 3\ndiversity: 3", "I cannot score this."};
    write_file(dir / "judge.json", script.dump());
    write_file(dir / "config.json", json{{"backend", {{"kind", "scripted"}, {"script_path", "judge.json"}}}}.dump());
    EXPECT_EQ(evaluate(dir / "runs", dir / "eval", dir / "config.json"), cli::PartialFailure);
    const auto excluded = read_json(dir / "eval" / "excluded.json");
    ASSERT_EQ(excluded.size(), 1u);
    EXPECT_EQ(excluded[0].at("session_id"), "ss-r001-s101");
    const auto report = aggregate_from_json(read_json(dir / "eval" / "aggregate.json"));
    int evaluated = 0;
    for (const auto& c : report.conditions) {
        evaluated += c.evaluated;
        if (c.condition == Condition::SelfSelect) {
            EXPECT_EQ(c.excluded, 1);
        }
    }
    EXPECT_EQ(evaluated, 5);
}

TEST(CliEvaluate, SkipsIncompleteTranscripts) {
    TempDir dir;
    ASSERT_EQ(run_plan(write_plan(dir, 1), dir / "runs"), cli::Success);
    const auto path = dir / "runs" / "equal-r000-s100.transcript.jsonl";
    auto text = read_file(path);
    text.erase(text.rfind("{\"failure\""));
    write_file(path, text);
    EXPECT_EQ(evaluate(dir / "runs", dir / "eval"), cli::PartialFailure);
    const auto excluded = read_json(dir / "eval" / "excluded.json");
    ASSERT_EQ(excluded.size(), 1u);
    EXPECT_NE(excluded[0].at("reason").get<std::string>().find("incomplete"), std::string::npos);
}

TEST(CliEvaluate, NoMatchingFilesIsUsageError) {
    TempDir dir;
    EXPECT_EQ(evaluate(dir / "nothing", dir / "eval"), cli::UsageError);
}

TEST(CliStats, MatchesOracleAggregate) {
    const auto oracle = read_json(test_fixture_dir() / "stats_oracle.json").at("aggregate");
    AggregateReport report;
    for (const auto& label : oracle.at("labels"))
        report.conditions.push_back(
            summary_from_values(parse_condition(label.get<std::string>()), oracle.at("conditions").at(label)));
    TempDir dir;
    write_file(dir / "aggregate.json", aggregate_to_json(report).dump());
    std::ostringstream err;
    ASSERT_EQ(cli::cmd_stats(dir / "aggregate.json", dir / "stats.json", err), cli::Success) << err.str();
    const auto stats = read_json(dir / "stats.json");
    ASSERT_EQ(stats.at("metrics").size(), 4u);
    for (const auto& m : stats.at("metrics")) {
        const auto& expected = oracle.at("expected").at(m.at("metric").get<std::string>());
        ASSERT_TRUE(m.at("applicable").get<bool>());
        EXPECT_NEAR(m.at("statistic").get<double>(), expected.at("H").get<double>(), 1e-9);
        EXPECT_NEAR(m.at("p").get<double>(), expected.at("p").get<double>(), 1e-9);
        ASSERT_EQ(m.at("pairwise").size(), expected.at("pairwise").size());
        for (std::size_t k = 0; k < expected.at("pairwise").size(); ++k) {
            EXPECT_NEAR(m.at("pairwise")[k].at("z").get<double>(), expected.at("pairwise")[k].at("z").get<double>(),
                        1e-9);
            EXPECT_NEAR(m.at("pairwise")[k].at("p_adj").get<double>(),
                        expected.at("pairwise")[k].at("p_adjusted").get<double>(), 1e-9);
        }
    }
}

TEST(CliStats, IdenticalDistributionsAndDegenerateInput) {
    TempDir dir;
    const json same{{"breakdown_count", {1, 2, 3}}, {"coherence", {3, 3, 3}}, {"cooperativeness", {1, 2, 3}},
                    {"diversity", {5, 4, 3}}};
    AggregateReport report{{summary_from_values(Condition::Equal, same), summary_from_values(Condition::SelfSelect, same)}};
    write_file(dir / "aggregate.json", aggregate_to_json(report).dump());
    std::ostringstream err;
    ASSERT_EQ(cli::cmd_stats(dir / "aggregate.json", dir / "stats.json", err), cli::Success);
    const auto stats = read_json(dir / "stats.json");
    for (const auto& m : stats.at("metrics")) {
        if (m.at("metric") == "coherence") {
            EXPECT_FALSE(m.at("applicable").get<bool>());
            EXPECT_TRUE(m.contains("reason"));
        } else {
            EXPECT_EQ(m.at("statistic").get<double>(), 0.0);
            EXPECT_DOUBLE_EQ(m.at("p").get<double>(), 1.0);
        }
    }

    report.conditions.pop_back();
    write_file(dir / "single.json", aggregate_to_json(report).dump());
    EXPECT_EQ(cli::cmd_stats(dir / "single.json", dir / "out.json", err), cli::UsageError);
    EXPECT_EQ(cli::cmd_stats(dir / "missing.json", dir / "out.json", err), cli::UsageError);
}

TEST(CliReplay, RendersGoldenTranscript) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_replay(parley::testing::golden_transcript_path(), false, out, err), cli::Success);
    EXPECT_EQ(out.str(), render_transcript(read_transcript(parley::testing::golden_transcript_path())));
    TempDir dir;
    write_file(dir / "bad.jsonl", "not json\n");
    EXPECT_EQ(cli::cmd_replay(dir / "bad.jsonl", false, out, err), cli::UsageError);
    EXPECT_NE(err.str().find("line 1"), std::string::npos);
}

#ifdef PARLEY_CLI_PATH
namespace {
std::pair<int, std::string> shell(const std::string& command) {
    std::string output;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) return {-1, output};
    char buf[4096];
    while (const auto n = std::fread(buf, 1, sizeof buf, pipe))
        output.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}
} // namespace

TEST(CliBinary, VersionReplayAndUsageErrors) {
    const std::string bin = PARLEY_CLI_PATH;
    const auto [version_rc, version] = shell(bin + " --version");
    EXPECT_EQ(version_rc, 0);
    EXPECT_NE(version.find("0.1.0"), std::string::npos);
    const auto [replay_rc, replay] = shell(bin + " replay " + parley::testing::golden_transcript_path().string());
    EXPECT_EQ(replay_rc, 0);
    EXPECT_NE(replay.find("[Turn 10]"), std::string::npos);
    EXPECT_EQ(shell(bin + " run --no-such-flag").first, 2);
    EXPECT_EQ(shell(bin + " replay /nonexistent.jsonl").first, 2);
}
#endif
