// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parley/agents.hpp"
#include "parley/backend.hpp"
#include "parley/types.hpp"

namespace parley {

inline constexpr int scenario_schema_version = 1;
inline constexpr int plan_schema_version = 1;

struct Scenario {
    std::string title;
    std::string setting_text;
    std::vector<CharacterSheet> characters;

    std::vector<std::string> roster_names() const;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Validates and converts. Every problem is collected into one ValidationError,
/// each prefixed with a JSON-pointer path such as "/characters/2/missions".
Scenario parse_scenario(const json& j);
Scenario load_scenario(const std::filesystem::path& path);
json scenario_to_json(const Scenario& scenario);

/// Long-term memory can be one store shared by all agents, or one per agent.
enum class MemoryMode { Shared, PerAgent };

std::string_view to_string(MemoryMode m) noexcept;
MemoryMode parse_memory_mode(std::string_view text);

/// Everything needed to run one session. Also the on-disk session config format.
struct SessionConfig {
    std::string session_id;
    std::filesystem::path scenario_path;
    Condition condition = Condition::CurrentSelectsNext;
    int run_index = 0;
    int turn_budget = 10;
    std::uint64_t seed = 0;
    std::size_t history_window_k = 5;
    std::size_t retrieval_top_l = 5;
    MemoryMode memory_mode = MemoryMode::Shared;
    std::size_t think_concurrency = 4;
    RoutingTable routing;
    BackendConfig backend;
};

json session_config_to_json(const SessionConfig& config);
SessionConfig parse_session_config(const json& j, const std::filesystem::path& base_dir);

struct ExperimentPlan {
    std::filesystem::path scenario_path;
    std::vector<Condition> conditions;
    int runs_per_condition = 1;
    int turn_budget = 10;
    std::uint64_t base_seed = 0;
    std::size_t history_window_k = 5;
    std::size_t retrieval_top_l = 5;
    MemoryMode memory_mode = MemoryMode::Shared;
    std::size_t think_concurrency = 4;
    RoutingTable routing;
    BackendConfig backend;
};

/// Relative paths inside the plan are resolved against base_dir.
ExperimentPlan parse_plan(const json& j, const std::filesystem::path& base_dir);
ExperimentPlan load_plan(const std::filesystem::path& path);
json plan_to_json(const ExperimentPlan& plan);

/// Condition-major, run-minor. Run r uses seed base_seed + r, so the same run
/// index is paired across conditions.
std::vector<SessionConfig> expand_plan(const ExperimentPlan& plan);

std::string make_session_id(Condition condition, int run_index, std::uint64_t seed);

} // namespace parley
