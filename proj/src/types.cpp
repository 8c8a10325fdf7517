// SPDX-License-Identifier: Apache-2.0
#include "parley/types.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

std::string_view to_string(Condition c) noexcept {
    switch (c) {
    case Condition::Equal: return "EQUAL";
    case Condition::SelfSelect: return "SS";
    case Condition::CurrentSelectsNext: return "CSSN_OR_SS";
    }
    return "?";
}

Condition parse_condition(std::string_view text) {
    std::string key = detail::upper(detail::trim(text));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "EQUAL") return Condition::Equal;
    if (key == "SS") return Condition::SelfSelect;
    if (key == "CSSN_OR_SS") return Condition::CurrentSelectsNext;
    throw ConfigError("unknown condition '" + std::string(text) + "' (expected EQUAL, SS or CSSN_OR_SS)");
}

std::string_view to_string(Action a) noexcept {
    return a == Action::Speak ? "speak" : "listen";
}

namespace {

constexpr std::array<std::pair<PairType, std::string_view>, 7> pair_type_names{{
    {PairType::None, "none"},
    {PairType::WhQuestion, "wh_question"},
    {PairType::YesNoQuestion, "yes_no_question"},
    {PairType::Addressing, "addressing"},
    {PairType::Request, "request"},
    {PairType::Invitation, "invitation"},
    {PairType::Other, "other"},
}};

constexpr std::array<std::pair<SelectionReason, std::string_view>, 6> reason_names{{
    {SelectionReason::Designated, "Designated"},
    {SelectionReason::HighestBid, "HighestBid"},
    {SelectionReason::TieBreak, "TieBreak"},
    {SelectionReason::SpeakerContinues, "SpeakerContinues"},
    {SelectionReason::FirstTurnRandom, "FirstTurnRandom"},
    {SelectionReason::EqualSchedule, "EqualSchedule"},
}};

} // namespace

std::string_view to_string(PairType t) noexcept {
    for (const auto& [type, name] : pair_type_names)
        if (type == t) return name;
    return "none";
}

std::optional<PairType> parse_pair_type(std::string_view text) {
    // "Yes/No question", "wh-question", "WhQuestion" all map to the same key.
    std::string key;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    for (const auto& [type, name] : pair_type_names) {
        std::string candidate;
        for (char ch : name)
            if (ch != '_') candidate.push_back(ch);
        if (candidate == key) return type;
    }
    return std::nullopt;
}

std::string_view to_string(SelectionReason r) noexcept {
    for (const auto& [reason, name] : reason_names)
        if (reason == r) return name;
    return "?";
}

std::optional<SelectionReason> parse_selection_reason(std::string_view text) {
    for (const auto& [reason, name] : reason_names)
        if (name == text) return reason;
    return std::nullopt;
}

void to_json(json& j, const ThinkOutput& t) {
    j = json{{"thought", t.thought}, {"action", to_string(t.action)}, {"importance", t.importance}};
}

void from_json(const json& j, ThinkOutput& t) {
    t.thought = j.at("thought").get<std::string>();
    const auto action = j.at("action").get<std::string>();
    if (action != "speak" && action != "listen") throw ParseError("invalid action '" + action + "'");
    t.action = action == "speak" ? Action::Speak : Action::Listen;
    t.importance = j.at("importance").get<int>();
}

void to_json(json& j, const Detection& d) {
    j = json{{"is_first_pair_part", d.is_first_pair_part},
             {"pair_type", to_string(d.pair_type)},
             {"addressee_name", d.addressee_name ? json(*d.addressee_name) : json(nullptr)},
             {"expected_second_pair_part",
              d.expected_second_pair_part ? json(*d.expected_second_pair_part) : json(nullptr)},
             {"raw_addressee", d.raw_addressee ? json(*d.raw_addressee) : json(nullptr)}};
}

namespace {
std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}
} // namespace

void from_json(const json& j, Detection& d) {
    d.is_first_pair_part = j.at("is_first_pair_part").get<bool>();
    const auto type = parse_pair_type(j.at("pair_type").get<std::string>());
    if (!type) throw ParseError("invalid pair_type");
    d.pair_type = *type;
    d.addressee_name = optional_string(j, "addressee_name");
    d.expected_second_pair_part = optional_string(j, "expected_second_pair_part");
    d.raw_addressee = optional_string(j, "raw_addressee");
}

void to_json(json& j, const Utterance& u) {
    j = json{{"turn_index", u.turn_index}, {"speaker_name", u.speaker_name}, {"text", u.text}};
}

void from_json(const json& j, Utterance& u) {
    u.turn_index = j.at("turn_index").get<int>();
    u.speaker_name = j.at("speaker_name").get<std::string>();
    u.text = j.at("text").get<std::string>();
}

} // namespace parley
