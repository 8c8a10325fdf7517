// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parley/backend.hpp"
#include "parley/memory.hpp"
#include "parley/types.hpp"

namespace parley {

/// Everything a player is told about their own character. Only name and
/// public_profile are ever shown to other agents.
struct CharacterSheet {
    std::string name;
    std::string public_profile;
    std::string background;
    std::vector<std::string> objectives;
    std::vector<std::string> day_of_incident_actions;
    std::vector<std::string> missions;

    friend bool operator==(const CharacterSheet&, const CharacterSheet&) = default;
};

void to_json(json& j, const CharacterSheet& s);
void from_json(const json& j, CharacterSheet& s);

/// Surface-level view of another participant.
struct Participant {
    std::string name;
    std::string public_profile;
};

/// Scene text plus the other participants' public profiles.
struct PromptContext {
    std::string setting_text;
    std::vector<Participant> others;
};

/// Memory inputs for one prompt, already windowed and retrieved.
struct MemoryView {
    std::span<const Utterance> history;
    std::span<const std::string> own_thoughts;
    std::span<const KnowledgeEntry> knowledge;
    // Turn number (1-based) of the utterance about to be produced.
    int upcoming_turn = 1;
};

std::string build_think_prompt(const CharacterSheet& sheet, const PromptContext& context, const MemoryView& memory);
std::string build_speak_prompt(const CharacterSheet& sheet, const PromptContext& context, const MemoryView& memory,
                               std::optional<std::string_view> constraint);
std::string build_detect_prompt(const Utterance& utterance, std::span<const std::string> roster_names);

/// "action: speak|listen", "importance: N", "thought: ..." in any order, with
/// ':' or '=' separators, on one line or several. Importance is rounded half-up
/// and clamped to [0, 9]. Returns nullopt when a key is missing or invalid.
std::optional<ThinkOutput> parse_think_output(std::string_view text);

/// "first_pair_part", "type", "addressee" keys. The addressee is resolved
/// against roster_names; anything else (including "everyone") becomes empty,
/// with the model's answer kept in raw_addressee.
std::optional<Detection> parse_detection(std::string_view text, std::span<const std::string> roster_names);

/// Second-pair-part label imposed on a designated responder.
std::string_view second_pair_part_for(PairType type) noexcept;

/// "everyone", "all", "anyone" and similar whole-group answers.
bool is_broadcast_addressee(std::string_view name);

/// Trimmed, case-folded exact match against the roster; no fuzzy matching.
std::optional<std::size_t> match_roster_name(std::string_view name, std::span<const std::string> roster_names);

/// A character taking part in one session. Cheap to copy; holds no memory of its own.
class Agent {
public:
    Agent(CharacterSheet sheet, PromptContext context);

    const CharacterSheet& sheet() const noexcept { return sheet_; }
    const std::string& name() const noexcept { return sheet_.name; }
    const PromptContext& context() const noexcept { return context_; }

    /// Unparseable output is retried once with a format reminder; a second
    /// failure gives ThinkOutput{"", Listen, 0} and a warning.
    ThinkOutput think(const MemoryView& memory, ModelClient& client, Warnings* warnings = nullptr) const;

    /// An empty response is retried once; a second empty response throws SessionError.
    Utterance speak(const MemoryView& memory, std::optional<std::string_view> constraint, ModelClient& client) const;

private:
    CharacterSheet sheet_;
    PromptContext context_;
};

/// Unparseable output is retried once, then treated as no detection.
Detection detect_designation(const Utterance& utterance, std::span<const std::string> roster_names,
                             ModelClient& client, Warnings* warnings = nullptr);

} // namespace parley
