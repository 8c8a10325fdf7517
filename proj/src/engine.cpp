// SPDX-License-Identifier: Apache-2.0
#include "parley/engine.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "parley/error.hpp"

namespace parley {

EngineOptions engine_options(const SessionConfig& config) {
    EngineOptions o;
    o.condition = config.condition;
    o.turn_budget = config.turn_budget;
    o.seed = config.seed;
    o.history_window_k = config.history_window_k;
    o.retrieval_top_l = config.retrieval_top_l;
    o.memory_mode = config.memory_mode;
    o.think_concurrency = config.think_concurrency;
    return o;
}

namespace {

json optional_json(const std::optional<std::string>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<std::string> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

void warn(Warnings& sink, std::string message) {
    spdlog::warn("{}", message);
    sink.push_back(std::move(message));
}

} // namespace

void to_json(json& j, const TurnRecord& r) {
    json thoughts = json::array();
    for (const auto& t : r.think_outputs) {
        json entry = t.output;
        entry["agent"] = t.agent;
        thoughts.push_back(std::move(entry));
    }
    j = json{{"turn_index", r.turn_index},
             {"speaker", r.speaker},
             {"utterance", r.utterance},
             {"selection_reason", to_string(r.selection_reason)},
             {"think_outputs", thoughts},
             {"detection", r.detection ? json(*r.detection) : json(nullptr)},
             {"designated_next", optional_json(r.designated_next)},
             {"constraint_applied", optional_json(r.constraint_applied)},
             {"knowledge", r.knowledge},
             {"warnings", r.warnings}};
}

void from_json(const json& j, TurnRecord& r) {
    r.turn_index = j.at("turn_index").get<int>();
    r.speaker = j.at("speaker").get<std::string>();
    r.utterance = j.at("utterance").get<Utterance>();
    const auto reason = parse_selection_reason(j.at("selection_reason").get<std::string>());
    if (!reason) throw ParseError("unknown selection_reason " + j.at("selection_reason").dump());
    r.selection_reason = *reason;
    r.think_outputs.clear();
    for (const auto& t : j.at("think_outputs"))
        r.think_outputs.push_back({t.at("agent").get<std::string>(), t.get<ThinkOutput>()});
    r.detection = j.contains("detection") && !j.at("detection").is_null()
                      ? std::optional(j.at("detection").get<Detection>())
                      : std::nullopt;
    r.designated_next = optional_from(j, "designated_next");
    r.constraint_applied = optional_from(j, "constraint_applied");
    r.knowledge = j.value("knowledge", std::vector<std::string>{});
    r.warnings = j.value("warnings", std::vector<std::string>{});
}

Selection select_most_important(std::span<const ThinkOutput> bids, std::optional<AgentId> previous_speaker, Rng& rng) {
    if (bids.empty()) throw std::invalid_argument("select_most_important: no agents");
    std::vector<std::size_t> bidders;
    for (std::size_t i = 0; i < bids.size(); ++i)
        if (bids[i].action == Action::Speak) bidders.push_back(i);

    if (bidders.size() == 1) return {AgentId{bidders.front()}, SelectionReason::HighestBid};
    if (bidders.empty()) {
        if (previous_speaker) return {*previous_speaker, SelectionReason::SpeakerContinues};
        return {AgentId{rng.uniform_index(bids.size())}, SelectionReason::FirstTurnRandom};
    }
    int best = -1;
    for (auto i : bidders)
        best = std::max(best, bids[i].importance);
    std::vector<std::size_t> top;
    for (auto i : bidders)
        if (bids[i].importance == best) top.push_back(i);
    if (top.size() == 1) return {AgentId{top.front()}, SelectionReason::HighestBid};
    return {AgentId{top[rng.uniform_index(top.size())]}, SelectionReason::TieBreak};
}

std::vector<AgentId> schedule_equal(std::size_t roster_size, Rng& rng, int turn_budget) {
    if (roster_size == 0) throw std::invalid_argument("schedule_equal: empty roster");
    std::vector<AgentId> schedule;
    const auto budget = static_cast<std::size_t>(std::max(turn_budget, 0));
    schedule.reserve(budget + roster_size);
    while (schedule.size() < budget) {
        std::vector<AgentId> round(roster_size);
        for (std::size_t i = 0; i < roster_size; ++i)
            round[i] = AgentId{i};
        rng.shuffle(std::span<AgentId>(round));
        schedule.insert(schedule.end(), round.begin(), round.end());
    }
    schedule.resize(budget);
    return schedule;
}

std::optional<AgentId> resolve_addressee(const Detection& detection, std::span<const std::string> roster) {
    if (!detection.is_first_pair_part || !detection.addressee_name) return std::nullopt;
    if (const auto index = match_roster_name(*detection.addressee_name, roster)) return AgentId{*index};
    return std::nullopt;
}

// ---------------------------------------------------------------------------

SessionMemory::SessionMemory(std::span<const std::string> roster, std::size_t window_k, MemoryMode mode)
    : history_(window_k), mode_(mode) {
    for (const auto& name : roster)
        short_term_.emplace_back(name, window_k);
    stores_.resize(mode == MemoryMode::Shared ? 1 : roster.size());
}

LongTermStore& SessionMemory::long_term(AgentId id) {
    return mode_ == MemoryMode::Shared ? stores_.front() : stores_.at(id.value);
}

const LongTermStore& SessionMemory::long_term(AgentId id) const {
    return mode_ == MemoryMode::Shared ? stores_.front() : stores_.at(id.value);
}

std::vector<KnowledgeEntry> SessionMemory::snapshot() const {
    std::vector<KnowledgeEntry> all;
    for (const auto& store : stores_)
        all.insert(all.end(), store.entries().begin(), store.entries().end());
    return all;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Agent> make_agents(const Scenario& scenario) {
    std::vector<Agent> agents;
    for (std::size_t i = 0; i < scenario.characters.size(); ++i) {
        PromptContext context;
        context.setting_text = scenario.setting_text;
        for (std::size_t k = 0; k < scenario.characters.size(); ++k) {
            if (k == i) continue;
            context.others.push_back({scenario.characters[k].name, scenario.characters[k].public_profile});
        }
        agents.emplace_back(scenario.characters[i], std::move(context));
    }
    return agents;
}

} // namespace

Session::Session(const Scenario& scenario, EngineOptions options, ModelClient& client)
    : options_(options),
      client_(client),
      agents_(make_agents(scenario)),
      memory_(std::span<const std::string>(scenario.roster_names()), options.history_window_k, options.memory_mode) {
    if (scenario.characters.size() < 2) throw ConfigError("a session needs at least two characters");
    if (options_.turn_budget < 1) throw ConfigError("turn_budget must be >= 1");
    if (options_.retrieval_top_l < 1) throw ConfigError("retrieval_top_l must be >= 1");
    state_.roster = scenario.roster_names();
    state_.rng = Rng(options_.seed);
    state_.condition = options_.condition;
    state_.turn_budget = options_.turn_budget;
    if (state_.condition == Condition::Equal)
        state_.equal_schedule = schedule_equal(state_.roster.size(), state_.rng, state_.turn_budget);
}

std::vector<KnowledgeEntry> Session::retrieve_for(const LongTermStore& store, Warnings& warnings) {
    if (memory_.history().empty() || store.empty()) return {};
    const auto& query = memory_.history().latest().text;
    const EmbedFn embed = [this](std::string_view text) {
        const std::string owned(text);
        return client_.embed_texts(std::span<const std::string>(&owned, 1)).at(0);
    };
    return retrieve(store, query, embed, options_.retrieval_top_l, &warnings);
}

std::vector<ThinkOutput> Session::think_all(const std::vector<KnowledgeEntry>& shared_knowledge,
                                            const std::vector<std::vector<KnowledgeEntry>>& per_agent_knowledge,
                                            Warnings& warnings) {
    const auto history = memory_.history().to_vector();
    const std::size_t n = agents_.size();
    std::vector<std::vector<std::string>> thoughts(n);
    for (std::size_t i = 0; i < n; ++i)
        thoughts[i] = memory_.short_term(AgentId{i}).to_vector();

    const auto view_for = [&](std::size_t i) {
        const auto& knowledge = per_agent_knowledge.empty() ? shared_knowledge : per_agent_knowledge[i];
        return MemoryView{history, thoughts[i], knowledge, state_.turn_index + 1};
    };

    std::vector<ThinkOutput> outputs(n);
    std::vector<Warnings> per_agent_warnings(n);
    const std::size_t width = std::max<std::size_t>(1, options_.think_concurrency);
    if (width == 1) {
        for (std::size_t i = 0; i < n; ++i)
            outputs[i] = agents_[i].think(view_for(i), client_, &per_agent_warnings[i]);
    } else {
        for (std::size_t begin = 0; begin < n; begin += width) {
            const std::size_t end = std::min(n, begin + width);
            std::vector<std::future<ThinkOutput>> pending;
            for (std::size_t i = begin; i < end; ++i) {
                pending.push_back(std::async(std::launch::async, [&, i] {
                    return agents_[i].think(view_for(i), client_, &per_agent_warnings[i]);
                }));
            }
            // Collect everything before surfacing the first failure.
            std::exception_ptr failure;
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    outputs[i] = pending[i - begin].get();
                } catch (...) {
                    if (!failure) failure = std::current_exception();
                }
            }
            if (failure) std::rethrow_exception(failure);
        }
    }
    for (auto& w : per_agent_warnings)
        warnings.insert(warnings.end(), w.begin(), w.end());
    return outputs;
}

std::vector<std::string> Session::commit_knowledge(const Utterance& utterance, Warnings& warnings) {
    const auto store_facts = [&](LongTermStore& store, const std::vector<std::string>& facts,
                                 std::optional<std::string> owner) {
        if (facts.empty()) return;
        std::vector<Embedding> vectors;
        try {
            vectors = client_.embed_texts(facts);
        } catch (const BackendError& e) {
            warn(warnings, std::string("embedding knowledge failed; facts not stored: ") + e.what());
            return;
        }
        for (std::size_t i = 0; i < facts.size(); ++i)
            store.append({facts[i], std::move(vectors[i]), utterance.turn_index, utterance.speaker_name, owner});
    };

    if (memory_.mode() == MemoryMode::Shared) {
        auto facts = normalize_knowledge(utterance, client_, std::nullopt, &warnings);
        store_facts(memory_.long_term(AgentId{0}), facts, std::nullopt);
        return facts;
    }
    std::vector<std::string> recorded;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        const auto& owner = agents_[i].name();
        auto facts = normalize_knowledge(utterance, client_, owner, &warnings);
        store_facts(memory_.long_term(AgentId{i}), facts, owner);
        for (const auto& f : facts)
            recorded.push_back("[" + owner + "] " + f);
    }
    return recorded;
}

TurnRecord Session::step_turn() {
    if (finished()) throw std::logic_error("step_turn called after the turn budget was spent");

    Warnings warnings;
    const int turn = state_.turn_index;
    const std::size_t n = agents_.size();

    state_.current_speaker = state_.next_speaker;
    const auto owed_constraint = state_.pending_constraint;
    state_.next_speaker.reset();
    state_.pending_constraint.reset();

    // Knowledge retrieved against the previous utterance, shared or per agent.
    std::vector<KnowledgeEntry> shared_knowledge;
    std::vector<std::vector<KnowledgeEntry>> per_agent_knowledge;
    if (memory_.mode() == MemoryMode::Shared) {
        shared_knowledge = retrieve_for(memory_.long_term(AgentId{0}), warnings);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            per_agent_knowledge.push_back(retrieve_for(memory_.long_term(AgentId{i}), warnings));
    }

    const auto bids = think_all(shared_knowledge, per_agent_knowledge, warnings);

    Selection selection{};
    if (state_.condition == Condition::Equal) {
        selection = {state_.equal_schedule.at(static_cast<std::size_t>(turn)), SelectionReason::EqualSchedule};
    } else if (state_.current_speaker) {
        selection = {*state_.current_speaker, SelectionReason::Designated};
    } else if (turn == 0) {
        selection = {AgentId{state_.rng.uniform_index(n)}, SelectionReason::FirstTurnRandom};
    } else {
        selection = select_most_important(bids, previous_speaker_, state_.rng);
    }
    state_.current_speaker = selection.agent;
    const auto speaker = selection.agent;

    std::optional<std::string> constraint;
    if (selection.reason == SelectionReason::Designated && owed_constraint && !owed_constraint->empty())
        constraint = owed_constraint;

    const auto history = memory_.history().to_vector();
    const auto own = memory_.short_term(speaker).to_vector();
    const auto& speaker_knowledge = per_agent_knowledge.empty() ? shared_knowledge : per_agent_knowledge[speaker.value];
    const MemoryView speaker_view{history, own, speaker_knowledge, turn + 1};
    auto utterance = agents_[speaker.value].speak(
        speaker_view, constraint ? std::optional<std::string_view>(*constraint) : std::nullopt, client_);

    // Commit point: every agent gets exactly one short-term append.
    for (std::size_t i = 0; i < n; ++i) {
        if (AgentId{i} == speaker)
            memory_.short_term(AgentId{i}).append(utterance.text);
        else
            memory_.short_term(AgentId{i}).append(bids[i].thought);
    }
    memory_.history().append(utterance);
    auto knowledge = commit_knowledge(utterance, warnings);

    TurnRecord record;
    record.turn_index = turn;
    record.speaker = agents_[speaker.value].name();
    record.selection_reason = selection.reason;
    record.constraint_applied = constraint;
    for (std::size_t i = 0; i < n; ++i)
        record.think_outputs.push_back({agents_[i].name(), bids[i]});

    if (state_.condition == Condition::CurrentSelectsNext) {
        auto detection = detect_designation(utterance, state_.roster, client_, &warnings);
        const auto addressee = resolve_addressee(detection, state_.roster);
        if (detection.is_first_pair_part && !addressee && detection.raw_addressee) {
            const auto& raw = *detection.raw_addressee;
            if (!is_broadcast_addressee(raw))
                warn(warnings, "designated addressee '" + raw + "' is not in the roster; self-selection next");
        }
        if (addressee && *addressee == speaker) {
            warn(warnings, record.speaker + " addressed themselves; treated as no designation");
        } else if (addressee) {
            state_.next_speaker = addressee;
            state_.pending_constraint = detection.expected_second_pair_part;
            record.designated_next = state_.roster[addressee->value];
        }
        record.detection = std::move(detection);
    }

    record.utterance = std::move(utterance);
    record.knowledge = std::move(knowledge);
    record.warnings = std::move(warnings);

    previous_speaker_ = speaker;
    ++state_.turn_index;
    return record;
}

// ---------------------------------------------------------------------------

std::string_view to_string(TranscriptStatus s) noexcept {
    return s == TranscriptStatus::Complete ? "Complete" : "Incomplete";
}

Transcript run_session(const Scenario& scenario, const EngineOptions& options, ModelClient& client,
                       const TurnSink& on_turn) {
    Transcript t;
    t.scenario_title = scenario.title;
    t.condition = options.condition;
    t.seed = options.seed;
    t.turn_budget = options.turn_budget;
    t.history_window_k = options.history_window_k;
    t.retrieval_top_l = options.retrieval_top_l;
    t.memory_mode = options.memory_mode;

    Session session(scenario, options, client);
    while (!session.finished()) {
        const int turn = session.state().turn_index;
        try {
            t.records.push_back(session.step_turn());
        } catch (const Error& e) {
            spdlog::error("session aborted at turn {}: {}", turn + 1, e.what());
            t.failure = SessionFailure{turn, e.what()};
            break;
        }
        if (on_turn) on_turn(t.records.back());
    }
    t.knowledge_store = session.memory().snapshot();
    t.status = !t.failure && static_cast<int>(t.records.size()) == t.turn_budget ? TranscriptStatus::Complete
                                                                                  : TranscriptStatus::Incomplete;
    return t;
}

} // namespace parley
