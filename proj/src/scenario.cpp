// SPDX-License-Identifier: Apache-2.0
#include "parley/scenario.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

std::vector<std::string> Scenario::roster_names() const {
    std::vector<std::string> names;
    names.reserve(characters.size());
    for (const auto& c : characters)
        names.push_back(c.name);
    return names;
}

namespace {

// Collects violations while reading a JSON object tree.
class Checker {
public:
    std::vector<std::string> violations;

    std::string text(const json& obj, const std::string& path, const char* key) {
        const auto at = path + "/" + key;
        if (!obj.is_object() || !obj.contains(key)) {
            violations.push_back(at + ": missing");
            return {};
        }
        const auto& v = obj.at(key);
        if (!v.is_string()) {
            violations.push_back(at + ": expected a string");
            return {};
        }
        auto s = v.get<std::string>();
        if (detail::trim(s).empty()) violations.push_back(at + ": must not be empty");
        return s;
    }

    std::vector<std::string> list(const json& obj, const std::string& path, const char* key) {
        const auto at = path + "/" + key;
        if (!obj.is_object() || !obj.contains(key)) {
            violations.push_back(at + ": missing");
            return {};
        }
        const auto& v = obj.at(key);
        if (!v.is_array()) {
            violations.push_back(at + ": expected an array of strings");
            return {};
        }
        if (v.empty()) violations.push_back(at + ": must not be empty");
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string() || detail::trim(v[i].get<std::string>()).empty()) {
                violations.push_back(fmt::format("{}/{}: expected a non-empty string", at, i));
                continue;
            }
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }
};

json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open {} {}", what, path.string()));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("malformed {} {}: {}", what, path.string(), e.what()));
    }
}

void check_schema_version(Checker& check, const json& j, int supported) {
    if (!j.contains("schema_version")) return;
    if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != supported)
        check.violations.push_back(fmt::format("/schema_version: unsupported (expected {})", supported));
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base_dir) {
    return p.is_relative() ? base_dir / p : p;
}

} // namespace

Scenario parse_scenario(const json& j) {
    Checker check;
    Scenario s;
    if (!j.is_object()) throw ValidationError({"/: expected an object"});
    check_schema_version(check, j, scenario_schema_version);
    s.title = check.text(j, "", "title");
    s.setting_text = check.text(j, "", "setting_text");
    if (!j.contains("characters") || !j.at("characters").is_array()) {
        check.violations.push_back("/characters: missing or not an array");
    } else {
        const auto& characters = j.at("characters");
        if (characters.size() < 2) check.violations.push_back("/characters: at least two characters required");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < characters.size(); ++i) {
            const auto path = fmt::format("/characters/{}", i);
            const auto& c = characters[i];
            if (!c.is_object()) {
                check.violations.push_back(path + ": expected an object");
                continue;
            }
            CharacterSheet sheet;
            sheet.name = check.text(c, path, "name");
            sheet.public_profile = check.text(c, path, "public_profile");
            sheet.background = check.text(c, path, "background");
            sheet.objectives = check.list(c, path, "objectives");
            sheet.day_of_incident_actions = check.list(c, path, "day_of_incident_actions");
            sheet.missions = check.list(c, path, "missions");
            const auto key = detail::fold_name(sheet.name);
            if (!key.empty() && !seen.insert(key).second)
                check.violations.push_back(path + "/name: duplicate character name '" + sheet.name + "'");
            s.characters.push_back(std::move(sheet));
        }
    }
    if (!check.violations.empty()) throw ValidationError(std::move(check.violations));
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    return parse_scenario(read_json_file(path, "scenario"));
}

json scenario_to_json(const Scenario& scenario) {
    return json{{"schema_version", scenario_schema_version},
                {"title", scenario.title},
                {"setting_text", scenario.setting_text},
                {"characters", scenario.characters}};
}

std::string_view to_string(MemoryMode m) noexcept {
    return m == MemoryMode::Shared ? "shared" : "per_agent";
}

MemoryMode parse_memory_mode(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    if (key == "shared") return MemoryMode::Shared;
    if (key == "per_agent" || key == "per-agent") return MemoryMode::PerAgent;
    throw ConfigError("unknown memory_mode '" + std::string(text) + "' (expected shared or per_agent)");
}

std::string make_session_id(Condition condition, int run_index, std::uint64_t seed) {
    return fmt::format("{}-r{:03}-s{}", detail::lower(to_string(condition)), run_index, seed);
}

json session_config_to_json(const SessionConfig& c) {
    return json{{"schema_version", plan_schema_version},
                {"session_id", c.session_id},
                {"scenario_path", c.scenario_path.string()},
                {"condition", to_string(c.condition)},
                {"run_index", c.run_index},
                {"turn_budget", c.turn_budget},
                {"seed", c.seed},
                {"history_window_k", c.history_window_k},
                {"retrieval_top_l", c.retrieval_top_l},
                {"memory_mode", to_string(c.memory_mode)},
                {"think_concurrency", c.think_concurrency},
                {"routing", c.routing},
                {"backend", c.backend}};
}

namespace {

// Shared by plans and single-session configs.
template <typename Target>
void read_common(const json& j, const std::filesystem::path& base_dir, Checker& check, Target& t) {
    if (!j.contains("scenario_path") || !j.at("scenario_path").is_string())
        check.violations.push_back("/scenario_path: missing");
    else
        t.scenario_path = resolve(j.at("scenario_path").get<std::string>(), base_dir);
    t.turn_budget = j.value("turn_budget", t.turn_budget);
    if (t.turn_budget < 1) check.violations.push_back("/turn_budget: must be >= 1");
    t.history_window_k = j.value("history_window_k", t.history_window_k);
    if (t.history_window_k < 1) check.violations.push_back("/history_window_k: must be >= 1");
    t.retrieval_top_l = j.value("retrieval_top_l", t.retrieval_top_l);
    if (t.retrieval_top_l < 1) check.violations.push_back("/retrieval_top_l: must be >= 1");
    t.think_concurrency = j.value("think_concurrency", t.think_concurrency);
    try {
        if (j.contains("memory_mode")) t.memory_mode = parse_memory_mode(j.at("memory_mode").get<std::string>());
        if (j.contains("routing")) t.routing = j.at("routing").get<RoutingTable>();
        if (j.contains("backend")) t.backend = parse_backend_config(j.at("backend"), base_dir);
    } catch (const ConfigError& e) {
        check.violations.push_back(e.what());
    } catch (const json::exception& e) {
        check.violations.push_back(e.what());
    }
}

} // namespace

SessionConfig parse_session_config(const json& j, const std::filesystem::path& base_dir) {
    Checker check;
    SessionConfig c;
    try {
        check_schema_version(check, j, plan_schema_version);
        read_common(j, base_dir, check, c);
        c.condition = parse_condition(j.at("condition").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
        c.run_index = j.value("run_index", 0);
        c.session_id = j.value("session_id", make_session_id(c.condition, c.run_index, c.seed));
    } catch (const ConfigError& e) {
        check.violations.push_back(e.what());
    } catch (const json::exception& e) {
        check.violations.push_back(e.what());
    }
    if (!check.violations.empty()) throw ValidationError(std::move(check.violations));
    return c;
}

ExperimentPlan parse_plan(const json& j, const std::filesystem::path& base_dir) {
    Checker check;
    ExperimentPlan plan;
    if (!j.is_object()) throw ValidationError({"/: expected an object"});
    check_schema_version(check, j, plan_schema_version);
    read_common(j, base_dir, check, plan);
    if (!j.contains("conditions") || !j.at("conditions").is_array() || j.at("conditions").empty()) {
        check.violations.push_back("/conditions: expected a non-empty array");
    } else {
        std::set<Condition> seen;
        for (std::size_t i = 0; i < j.at("conditions").size(); ++i) {
            try {
                const auto c = parse_condition(j.at("conditions")[i].get<std::string>());
                if (!seen.insert(c).second)
                    check.violations.push_back(fmt::format("/conditions/{}: duplicate condition", i));
                plan.conditions.push_back(c);
            } catch (const std::exception& e) {
                check.violations.push_back(fmt::format("/conditions/{}: {}", i, e.what()));
            }
        }
    }
    plan.runs_per_condition = j.value("runs_per_condition", plan.runs_per_condition);
    if (plan.runs_per_condition < 1) check.violations.push_back("/runs_per_condition: must be >= 1");
    plan.base_seed = j.value("base_seed", plan.base_seed);
    if (!check.violations.empty()) throw ValidationError(std::move(check.violations));
    return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
    return parse_plan(read_json_file(path, "plan"), path.parent_path());
}

json plan_to_json(const ExperimentPlan& plan) {
    json conditions = json::array();
    for (auto c : plan.conditions)
        conditions.push_back(to_string(c));
    return json{{"schema_version", plan_schema_version},
                {"scenario_path", plan.scenario_path.string()},
                {"conditions", conditions},
                {"runs_per_condition", plan.runs_per_condition},
                {"turn_budget", plan.turn_budget},
                {"base_seed", plan.base_seed},
                {"history_window_k", plan.history_window_k},
                {"retrieval_top_l", plan.retrieval_top_l},
                {"memory_mode", to_string(plan.memory_mode)},
                {"think_concurrency", plan.think_concurrency},
                {"routing", plan.routing},
                {"backend", plan.backend}};
}

std::vector<SessionConfig> expand_plan(const ExperimentPlan& plan) {
    std::vector<SessionConfig> configs;
    configs.reserve(plan.conditions.size() * static_cast<std::size_t>(plan.runs_per_condition));
    for (const auto condition : plan.conditions) {
        for (int run = 0; run < plan.runs_per_condition; ++run) {
            SessionConfig c;
            c.condition = condition;
            c.run_index = run;
            c.seed = plan.base_seed + static_cast<std::uint64_t>(run);
            c.session_id = make_session_id(condition, run, c.seed);
            c.scenario_path = plan.scenario_path;
            c.turn_budget = plan.turn_budget;
            c.history_window_k = plan.history_window_k;
            c.retrieval_top_l = plan.retrieval_top_l;
            c.memory_mode = plan.memory_mode;
            c.think_concurrency = plan.think_concurrency;
            c.routing = plan.routing;
            c.backend = plan.backend;
            configs.push_back(std::move(c));
        }
    }
    return configs;
}

} // namespace parley
