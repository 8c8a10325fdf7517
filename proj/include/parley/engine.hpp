// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parley/agents.hpp"
#include "parley/backend.hpp"
#include "parley/memory.hpp"
#include "parley/rng.hpp"
#include "parley/scenario.hpp"
#include "parley/types.hpp"

namespace parley {

struct EngineOptions {
    Condition condition = Condition::CurrentSelectsNext;
    int turn_budget = 10;
    std::uint64_t seed = 0;
    std::size_t history_window_k = 5;
    std::size_t retrieval_top_l = 5;
    MemoryMode memory_mode = MemoryMode::Shared;
    // Parallel think() calls per turn; 1 runs them in roster order on the calling thread.
    std::size_t think_concurrency = 4;
};

EngineOptions engine_options(const SessionConfig& config);

struct SessionState {
    std::vector<std::string> roster;
    int turn_index = 0;
    std::optional<AgentId> current_speaker;
    std::optional<AgentId> next_speaker;
    // Second-pair-part label owed by next_speaker.
    std::optional<std::string> pending_constraint;
    Rng rng{0};
    Condition condition = Condition::CurrentSelectsNext;
    int turn_budget = 1;
    // Precomputed speaking order, Equal condition only.
    std::vector<AgentId> equal_schedule;
};

struct NamedThought {
    std::string agent;
    ThinkOutput output;

    friend bool operator==(const NamedThought&, const NamedThought&) = default;
};

struct TurnRecord {
    int turn_index = 0;
    std::string speaker;
    Utterance utterance;
    std::vector<NamedThought> think_outputs;
    SelectionReason selection_reason = SelectionReason::HighestBid;
    std::optional<Detection> detection;
    // Resolved next speaker produced by this turn's detection.
    std::optional<std::string> designated_next;
    std::optional<std::string> constraint_applied;
    std::vector<std::string> knowledge;
    std::vector<std::string> warnings;

    friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

void to_json(json& j, const TurnRecord& r);
void from_json(const json& j, TurnRecord& r);

struct Selection {
    AgentId agent;
    SelectionReason reason;

    friend bool operator==(const Selection&, const Selection&) = default;
};

/// Self-selection over one turn's bids (indexed by roster position).
///
/// One speak-bidder wins outright; several are ranked by importance with ties
/// drawn uniformly from rng; with no bidders the previous speaker keeps the
/// floor, or a uniformly random agent is chosen if there is none.
Selection select_most_important(std::span<const ThinkOutput> bids, std::optional<AgentId> previous_speaker, Rng& rng);

/// Consecutive rounds, each an independent uniform permutation of the roster, truncated to turn_budget.
std::vector<AgentId> schedule_equal(std::size_t roster_size, Rng& rng, int turn_budget);

/// Maps a detection's addressee to a roster position. Broadcasts and unknown names give nullopt.
std::optional<AgentId> resolve_addressee(const Detection& detection, std::span<const std::string> roster);

/// Memory for one session: the shared window, each agent's short-term history,
/// and either one shared long-term store or one per agent.
class SessionMemory {
public:
    SessionMemory(std::span<const std::string> roster, std::size_t window_k, MemoryMode mode);

    HistoryWindow& history() noexcept { return history_; }
    const HistoryWindow& history() const noexcept { return history_; }
    ShortTermHistory& short_term(AgentId id) { return short_term_.at(id.value); }
    const ShortTermHistory& short_term(AgentId id) const { return short_term_.at(id.value); }
    LongTermStore& long_term(AgentId id);
    const LongTermStore& long_term(AgentId id) const;
    MemoryMode mode() const noexcept { return mode_; }
    std::size_t store_count() const noexcept { return stores_.size(); }
    const LongTermStore& store(std::size_t i) const { return stores_.at(i); }

    /// All knowledge entries, store by store.
    std::vector<KnowledgeEntry> snapshot() const;

private:
    HistoryWindow history_;
    std::vector<ShortTermHistory> short_term_;
    MemoryMode mode_;
    std::vector<LongTermStore> stores_;
};

/// One conversation. Turns run strictly in sequence; within a turn the think()
/// calls may be in flight together and are applied in roster order.
class Session {
public:
    Session(const Scenario& scenario, EngineOptions options, ModelClient& client);

    /// Runs one full turn: think, select, speak, commit memory, detect.
    TurnRecord step_turn();

    bool finished() const noexcept { return state_.turn_index >= state_.turn_budget; }
    const SessionState& state() const noexcept { return state_; }
    const SessionMemory& memory() const noexcept { return memory_; }
    const std::vector<Agent>& agents() const noexcept { return agents_; }
    const EngineOptions& options() const noexcept { return options_; }

private:
    std::vector<ThinkOutput> think_all(const std::vector<KnowledgeEntry>& shared_knowledge,
                                       const std::vector<std::vector<KnowledgeEntry>>& per_agent_knowledge,
                                       Warnings& warnings);
    std::vector<KnowledgeEntry> retrieve_for(const LongTermStore& store, Warnings& warnings);
    std::vector<std::string> commit_knowledge(const Utterance& utterance, Warnings& warnings);

    EngineOptions options_;
    ModelClient& client_;
    std::vector<Agent> agents_;
    SessionState state_;
    SessionMemory memory_;
    std::optional<AgentId> previous_speaker_;
};

enum class TranscriptStatus { Complete, Incomplete };

std::string_view to_string(TranscriptStatus s) noexcept;

struct SessionFailure {
    int turn_index = 0;
    std::string message;

    friend bool operator==(const SessionFailure&, const SessionFailure&) = default;
};

/// A finished (or aborted) session. The unit of persistence and evaluation.
struct Transcript {
    std::string session_id;
    std::string scenario_title;
    Condition condition = Condition::CurrentSelectsNext;
    std::uint64_t seed = 0;
    int turn_budget = 0;
    std::size_t history_window_k = 5;
    std::size_t retrieval_top_l = 5;
    MemoryMode memory_mode = MemoryMode::Shared;
    std::string rng_algorithm{Rng::algorithm};
    std::vector<TurnRecord> records;
    std::vector<KnowledgeEntry> knowledge_store;
    std::string call_log_ref;
    TranscriptStatus status = TranscriptStatus::Incomplete;
    std::optional<SessionFailure> failure;
    std::string created_at;
    std::string tool_version;
};

using TurnSink = std::function<void(const TurnRecord&)>;

/// Runs a session to its budget. Backend and speaker failures stop the session
/// and return what was produced so far, marked Incomplete with the failure recorded.
Transcript run_session(const Scenario& scenario, const EngineOptions& options, ModelClient& client,
                       const TurnSink& on_turn = {});

} // namespace parley
