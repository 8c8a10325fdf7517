// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace parley {

using json = nlohmann::json;

/// Speaker-selection regime for a whole session.
///
/// Equal gives every participant one turn per randomly permuted round.
/// SelfSelect picks speakers from importance bids only.
/// CurrentSelectsNext lets a first pair part designate the next speaker and
/// falls back to self-selection otherwise.
enum class Condition { Equal, SelfSelect, CurrentSelectsNext };

std::string_view to_string(Condition c) noexcept;
/// Accepts "EQUAL", "SS", "CSSN_OR_SS" (also "CSSN-or-SS"), case-insensitive. Throws ConfigError.
Condition parse_condition(std::string_view text);

enum class Action { Speak, Listen };

std::string_view to_string(Action a) noexcept;

/// Index into a session roster.
struct AgentId {
    std::size_t value = 0;

    friend auto operator<=>(const AgentId&, const AgentId&) = default;
};

/// One agent's per-turn deliberation: a plan, a speak/listen decision and a 0-9 urgency.
struct ThinkOutput {
    std::string thought;
    Action action = Action::Listen;
    int importance = 0;

    friend bool operator==(const ThinkOutput&, const ThinkOutput&) = default;
};

enum class PairType { None, WhQuestion, YesNoQuestion, Addressing, Request, Invitation, Other };

std::string_view to_string(PairType t) noexcept;
std::optional<PairType> parse_pair_type(std::string_view text);

/// First-pair-part analysis of one utterance.
///
/// addressee_name is always a canonical roster name or empty. raw_addressee keeps
/// whatever the model answered so unresolved names can be reported.
struct Detection {
    bool is_first_pair_part = false;
    PairType pair_type = PairType::None;
    std::optional<std::string> addressee_name;
    std::optional<std::string> expected_second_pair_part;
    std::optional<std::string> raw_addressee;

    static Detection none() { return {}; }

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct Utterance {
    int turn_index = 0;
    std::string speaker_name;
    std::string text;

    friend bool operator==(const Utterance&, const Utterance&) = default;
};

enum class SelectionReason { Designated, HighestBid, TieBreak, SpeakerContinues, FirstTurnRandom, EqualSchedule };

std::string_view to_string(SelectionReason r) noexcept;
std::optional<SelectionReason> parse_selection_reason(std::string_view text);

void to_json(json& j, const ThinkOutput& t);
void from_json(const json& j, ThinkOutput& t);
void to_json(json& j, const Detection& d);
void from_json(const json& j, Detection& d);
void to_json(json& j, const Utterance& u);
void from_json(const json& j, Utterance& u);

} // namespace parley
