// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "parley/error.hpp"
#include "parley/scenario.hpp"
#include "support.hpp"

using namespace parley;
using parley::testing::fixture_dir;
using parley::testing::TempDir;
using parley::testing::write_file;

namespace {

json scenario_json() {
    return scenario_to_json(parley::testing::small_scenario(3));
}

std::vector<std::string> violations_of(const json& j) {
    try {
        parse_scenario(j);
    } catch (const ValidationError& e) {
        return e.violations();
    }
    return {};
}

bool contains(const std::vector<std::string>& items, const std::string& needle) {
    return std::any_of(items.begin(), items.end(), [&](const auto& s) { return s.find(needle) != std::string::npos; });
}

} // namespace

TEST(Scenario, LoadsShippedFixture) {
    const auto s = load_scenario(fixture_dir() / "scenario" / "island_reunion.json");
    EXPECT_EQ(s.title, "The Lantern House Reunion");
    ASSERT_EQ(s.characters.size(), 4u);
    EXPECT_EQ(s.roster_names(),
              (std::vector<std::string>{"Hana Morrow", "Daniel Okafor", "Leona Brandt", "Felix Ardent"}));
    for (const auto& c : s.characters)
        EXPECT_FALSE(c.missions.empty());
}

TEST(Scenario, JsonRoundTrip) {
    const auto s = load_scenario(fixture_dir() / "scenario" / "island_reunion.json");
    EXPECT_EQ(parse_scenario(scenario_to_json(s)), s);
}

TEST(Scenario, ReportsEveryViolationWithPath) {
    auto j = scenario_json();
    j["characters"][1].erase("missions");
    j["characters"][2]["name"] = "agent 1";
    j["characters"][0]["objectives"] = json::array();
    j.erase("title");
    const auto v = violations_of(j);
    EXPECT_TRUE(contains(v, "/characters/1/missions: missing"));
    EXPECT_TRUE(contains(v, "/characters/2/name: duplicate"));
    EXPECT_TRUE(contains(v, "/characters/0/objectives: must not be empty"));
    EXPECT_TRUE(contains(v, "/title: missing"));
    EXPECT_EQ(v.size(), 4u);
}

TEST(Scenario, RejectsStructuralProblems) {
    EXPECT_THROW(parse_scenario(json::array()), ValidationError);
    auto one = scenario_json();
    one["characters"] = json::array({one["characters"][0]});
    EXPECT_TRUE(contains(violations_of(one), "at least two characters"));
    auto version = scenario_json();
    version["schema_version"] = 99;
    EXPECT_TRUE(contains(violations_of(version), "/schema_version"));
    auto bad_item = scenario_json();
    bad_item["characters"][0]["missions"][0] = 3;
    EXPECT_TRUE(contains(violations_of(bad_item), "/characters/0/missions/0"));
}

TEST(Scenario, MissingFileIsConfigError) {
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ConfigError);
    TempDir dir;
    write_file(dir / "bad.json", "{not json");
    EXPECT_THROW(load_scenario(dir / "bad.json"), ConfigError);
}

TEST(Plan, ExpandsConditionMajorWithPairedSeeds) {
    const json j{{"scenario_path", "scenario.json"},
                 {"conditions", {"EQUAL", "SS", "CSSN_OR_SS"}},
                 {"runs_per_condition", 50},
                 {"base_seed", 1000},
                 {"backend", {{"kind", "scripted"}, {"script_path", "script.json"}}}};
    const auto plan = parse_plan(j, "/base");
    EXPECT_EQ(plan.scenario_path, std::filesystem::path("/base/scenario.json"));
    EXPECT_EQ(plan.backend.script_path, std::filesystem::path("/base/script.json"));
    const auto configs = expand_plan(plan);
    ASSERT_EQ(configs.size(), 150u);
    EXPECT_EQ(configs[0].condition, Condition::Equal);
    EXPECT_EQ(configs[50].condition, Condition::SelfSelect);
    EXPECT_EQ(configs[149].condition, Condition::CurrentSelectsNext);
    EXPECT_EQ(configs[49].run_index, 49);
    EXPECT_EQ(configs[49].seed, 1049u);
    EXPECT_EQ(configs[7].seed, configs[107].seed);

    std::set<std::string> ids;
    for (const auto& c : configs)
        ids.insert(c.session_id);
    EXPECT_EQ(ids.size(), 150u);
    EXPECT_EQ(configs[0].session_id, "equal-r000-s1000");
    EXPECT_EQ(configs[149].session_id, "cssn_or_ss-r049-s1049");

    const auto again = expand_plan(parse_plan(j, "/base"));
    for (std::size_t i = 0; i < configs.size(); ++i)
        EXPECT_EQ(session_config_to_json(configs[i]), session_config_to_json(again[i]));
}

TEST(Plan, RoundTripAndValidation) {
    const json j{{"scenario_path", "/abs/scenario.json"},
                 {"conditions", {"SS"}},
                 {"runs_per_condition", 2},
                 {"memory_mode", "per_agent"},
                 {"history_window_k", 3}};
    const auto plan = parse_plan(j, "/base");
    EXPECT_EQ(plan.memory_mode, MemoryMode::PerAgent);
    EXPECT_EQ(plan_to_json(parse_plan(plan_to_json(plan), "/elsewhere")), plan_to_json(plan));

    json bad = j;
    bad["conditions"] = {"SS", "SS", "LOUD"};
    bad["runs_per_condition"] = 0;
    bad["turn_budget"] = 0;
    bad.erase("scenario_path");
    try {
        parse_plan(bad, "/base");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.violations().size(), 5u);
    }
}

TEST(SessionConfig, RoundTrip) {
    const json j{{"scenario_path", "s.json"}, {"condition", "CSSN_OR_SS"}, {"seed", 42}, {"run_index", 3}};
    const auto c = parse_session_config(j, "/base");
    EXPECT_EQ(c.session_id, make_session_id(Condition::CurrentSelectsNext, 3, 42));
    EXPECT_EQ(c.scenario_path, std::filesystem::path("/base/s.json"));
    const auto again = parse_session_config(session_config_to_json(c), "/other");
    EXPECT_EQ(session_config_to_json(again), session_config_to_json(c));
    EXPECT_THROW(parse_session_config(json{{"scenario_path", "s.json"}}, "/base"), ValidationError);
}

TEST(MemoryMode, Names) {
    EXPECT_EQ(parse_memory_mode("Shared"), MemoryMode::Shared);
    EXPECT_EQ(parse_memory_mode("per-agent"), MemoryMode::PerAgent);
    EXPECT_THROW(parse_memory_mode("global"), ConfigError);
}
