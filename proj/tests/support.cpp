// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <stdlib.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace parley::testing {

std::filesystem::path fixture_dir() {
    return PARLEY_FIXTURE_DIR;
}

std::filesystem::path test_fixture_dir() {
    return PARLEY_TEST_FIXTURE_DIR;
}

TempDir::TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "parley-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

ScriptQueue queue(Purpose purpose, std::vector<std::string> responses, std::optional<std::string> agent, bool repeat) {
    ScriptQueue q;
    q.purpose = purpose;
    q.responses = std::move(responses);
    q.agent = std::move(agent);
    q.repeat = repeat;
    return q;
}

std::unique_ptr<ModelClient> scripted_client(Script script, std::size_t concurrency) {
    return std::make_unique<ModelClient>(std::make_shared<ScriptedBackend>(std::move(script)), RoutingTable{},
                                         concurrency);
}

Scenario small_scenario(std::size_t count) {
    Scenario s;
    s.title = "Test scene";
    s.setting_text = "A quiet room with a locked door.";
    for (std::size_t i = 0; i < count; ++i) {
        CharacterSheet c;
        c.name = fmt::format("Agent {}", i + 1);
        c.public_profile = fmt::format("Guest number {}.", i + 1);
        c.background = "Arrived yesterday.";
        c.objectives = {"Find the key."};
        c.day_of_incident_actions = {"Stayed in the room."};
        c.missions = {"Ask about the key."};
        s.characters.push_back(std::move(c));
    }
    return s;
}

Scenario golden_scenario() {
    return load_scenario(fixture_dir() / "scenario" / "island_reunion.json");
}

EngineOptions golden_options() {
    EngineOptions o;
    o.condition = Condition::CurrentSelectsNext;
    o.turn_budget = 10;
    o.seed = 1;
    o.history_window_k = 5;
    o.retrieval_top_l = 3;
    o.memory_mode = MemoryMode::Shared;
    o.think_concurrency = 4;
    return o;
}

Transcript run_golden() {
    ModelClient client(std::make_shared<ScriptedBackend>(load_script(fixture_dir() / "golden" / "script.json")),
                       RoutingTable{}, 4);
    client.set_session_tag("golden-cssn");
    auto t = run_session(golden_scenario(), golden_options(), client);
    t.session_id = "golden-cssn";
    t.call_log_ref = "golden-cssn.calls.jsonl";
    t.tool_version = "golden";
    return t;
}

std::filesystem::path golden_transcript_path() {
    return fixture_dir() / "golden" / "transcript.jsonl";
}

RandomSession random_session(std::uint64_t seed, Condition condition, std::size_t agents, int turn_budget) {
    std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen); };
    const auto chance = [&](double p) { return std::bernoulli_distribution(p)(gen); };

    RandomSession s;
    s.scenario = small_scenario(agents);
    s.options.condition = condition;
    s.options.turn_budget = turn_budget;
    s.options.seed = seed;
    s.options.history_window_k = 1 + pick(6);
    s.options.retrieval_top_l = 1 + pick(4);
    s.options.memory_mode = chance(0.5) ? MemoryMode::Shared : MemoryMode::PerAgent;
    s.options.think_concurrency = 1 + pick(4);

    const auto names = s.scenario.roster_names();
    for (const auto& name : names) {
        std::vector<std::string> thinks;
        for (int t = 0; t < turn_budget; ++t) {
            const bool speak = chance(0.35);
            // Few distinct importance values so ties are common.
            const int importance = static_cast<int>(pick(4)) * 3;
            thinks.push_back(fmt::format("action: {}\nimportance: {}\nthought: {} considers turn {}.",
                                         speak ? "speak" : "listen", importance, name, t + 1));
        }
        s.script.queues.push_back(queue(Purpose::Think, std::move(thinks), name));
        s.script.queues.push_back(queue(Purpose::Speak, {name + " shares an observation."}, name, true));
    }
    static const std::vector<std::string> types{"wh_question", "yes_no_question", "addressing",
                                                "request",     "invitation",      "other"};
    std::vector<std::string> detections;
    for (int t = 0; t < turn_budget; ++t) {
        if (chance(0.3)) {
            detections.push_back("first_pair_part: no\ntype: none\naddressee: none");
            continue;
        }
        std::string addressee;
        const double roll = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
        if (roll < 0.75)
            addressee = names[pick(names.size())];
        else if (roll < 0.88)
            addressee = "everyone";
        else
            addressee = "The Caretaker";
        detections.push_back(
            fmt::format("first_pair_part: yes\ntype: {}\naddressee: {}", types[pick(types.size())], addressee));
    }
    s.script.queues.push_back(queue(Purpose::Detect, std::move(detections)));
    s.script.queues.push_back(queue(Purpose::Normalize, {"- A fact was mentioned.", ""}, std::nullopt, true));
    return s;
}

Transcript run_random_session(const RandomSession& session) {
    ModelClient client(std::make_shared<ScriptedBackend>(session.script), RoutingTable{}, 4);
    return run_session(session.scenario, session.options, client);
}

std::vector<std::string> turn_taking_violations(const Transcript& t, std::size_t roster_size) {
    std::vector<std::string> out;
    const auto fail = [&](int turn, const std::string& what) {
        out.push_back(fmt::format("{} turn {}: {}", t.session_id.empty() ? "session" : t.session_id, turn + 1, what));
    };
    std::map<std::string, int> spoken;
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        const int turn = static_cast<int>(i);
        ++spoken[r.speaker];
        if (t.condition != Condition::CurrentSelectsNext) {
            if (r.selection_reason == SelectionReason::Designated) fail(turn, "Designated outside CSSN_OR_SS");
            if (r.detection || r.designated_next) fail(turn, "detection outside CSSN_OR_SS");
        }
        if (t.condition == Condition::Equal) {
            if (r.selection_reason != SelectionReason::EqualSchedule) fail(turn, "EQUAL turn not from the schedule");
            continue;
        }
        const auto* previous = i > 0 ? &t.records[i - 1] : nullptr;
        if (previous && previous->designated_next) {
            if (r.speaker != *previous->designated_next) fail(turn, "designated speaker did not take the turn");
            if (r.selection_reason != SelectionReason::Designated) fail(turn, "designated turn not marked Designated");
            if (r.constraint_applied != previous->detection->expected_second_pair_part)
                fail(turn, "constraint differs from the owed second pair part");
            continue;
        }
        if (r.selection_reason == SelectionReason::Designated) fail(turn, "Designated without a designation");
        if (r.constraint_applied) fail(turn, "constraint without a designation");
        if (i == 0) {
            if (r.selection_reason != SelectionReason::FirstTurnRandom) fail(turn, "first turn not random");
            continue;
        }
        std::vector<const NamedThought*> bidders;
        for (const auto& thought : r.think_outputs)
            if (thought.output.action == Action::Speak) bidders.push_back(&thought);
        if (bidders.empty()) {
            if (r.speaker != previous->speaker) fail(turn, "all listened but the previous speaker did not continue");
            if (r.selection_reason != SelectionReason::SpeakerContinues) fail(turn, "all-listen reason mismatch");
        } else if (bidders.size() == 1) {
            if (r.speaker != bidders.front()->agent) fail(turn, "unique bidder was not selected");
            if (r.selection_reason != SelectionReason::HighestBid) fail(turn, "unique-bidder reason mismatch");
        } else {
            int best = -1;
            for (const auto* b : bidders)
                best = std::max(best, b->output.importance);
            const auto top = std::count_if(bidders.begin(), bidders.end(),
                                           [&](const auto* b) { return b->output.importance == best; });
            const auto chosen = std::find_if(bidders.begin(), bidders.end(),
                                             [&](const auto* b) { return b->agent == r.speaker; });
            if (chosen == bidders.end() || (*chosen)->output.importance != best)
                fail(turn, "speaker was not a highest bidder");
            const auto expected = top > 1 ? SelectionReason::TieBreak : SelectionReason::HighestBid;
            if (r.selection_reason != expected) fail(turn, "multi-bidder reason mismatch");
        }
    }
    // A resolvable, non-self designation must always be recorded.
    if (t.condition == Condition::CurrentSelectsNext) {
        for (std::size_t i = 0; i < t.records.size(); ++i) {
            const auto& r = t.records[i];
            const bool resolvable = r.detection && r.detection->is_first_pair_part && r.detection->addressee_name &&
                                    *r.detection->addressee_name != r.speaker;
            if (resolvable != r.designated_next.has_value())
                fail(static_cast<int>(i), "designation recorded inconsistently");
        }
    }
    if (t.condition == Condition::Equal && !t.records.empty()) {
        int lo = static_cast<int>(t.records.size());
        int hi = 0;
        const auto& roster = t.records.front().think_outputs;
        if (roster.size() != roster_size) out.push_back("think outputs do not cover the roster");
        for (const auto& member : roster) {
            const auto it = spoken.find(member.agent);
            const int count = it == spoken.end() ? 0 : it->second;
            lo = std::min(lo, count);
            hi = std::max(hi, count);
        }
        if (hi - lo > 1) out.push_back(fmt::format("EQUAL speak counts differ by {}", hi - lo));
    }
    return out;
}

} // namespace parley::testing
