// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parley/backend.hpp"
#include "parley/types.hpp"

namespace parley {

using Warnings = std::vector<std::string>;

/// Shared sliding window over the most recent k utterances.
class HistoryWindow {
public:
    explicit HistoryWindow(std::size_t capacity);

    void append(Utterance utterance);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::deque<Utterance>& entries() const noexcept { return entries_; }
    std::vector<Utterance> to_vector() const { return {entries_.begin(), entries_.end()}; }
    const Utterance& latest() const { return entries_.back(); }

private:
    std::size_t capacity_;
    std::deque<Utterance> entries_;
};

/// One agent's recent thoughts, or its own utterance on turns it spoke.
class ShortTermHistory {
public:
    ShortTermHistory(std::string owner, std::size_t capacity);

    void append(std::string entry);

    const std::string& owner() const noexcept { return owner_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t appended() const noexcept { return appended_; }
    const std::deque<std::string>& entries() const noexcept { return entries_; }
    std::vector<std::string> to_vector() const { return {entries_.begin(), entries_.end()}; }

private:
    std::string owner_;
    std::size_t capacity_;
    std::size_t appended_ = 0;
    std::deque<std::string> entries_;
};

struct KnowledgeEntry {
    std::string text;
    Embedding embedding;
    int source_turn = 0;
    std::string source_speaker;
    // Set when stores are kept per agent.
    std::optional<std::string> owner;

    friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

void to_json(json& j, const KnowledgeEntry& e);
void from_json(const json& j, KnowledgeEntry& e);

/// Append-only store of normalized facts with their embeddings.
class LongTermStore {
public:
    /// Throws ConfigError if the embedding dimension differs from earlier entries.
    void append(KnowledgeEntry entry);

    std::span<const KnowledgeEntry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::optional<std::size_t> dimension() const noexcept;

    /// FNV-1a over every entry; used to show retrieval leaves the store untouched.
    std::uint64_t digest() const;

private:
    std::vector<KnowledgeEntry> entries_;
};

/// a.b / (|a||b|). A zero-norm argument yields 0. Mismatched dimensions throw std::invalid_argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct ScoredEntry {
    std::size_t index = 0;
    double similarity = 0.0;
};

/// Ranks store entries against an already-embedded query: descending similarity,
/// then most recent source turn, then insertion order. Zero-norm entries are skipped.
std::vector<ScoredEntry> rank_entries(const LongTermStore& store, std::span<const double> query, std::size_t top_l,
                                      Warnings* warnings = nullptr);

using EmbedFn = std::function<Embedding(std::string_view)>;

/// Embeds the query once and returns at most top_l entries. Embedding failures
/// produce an empty result and a warning.
std::vector<KnowledgeEntry> retrieve(const LongTermStore& store, std::string_view query, const EmbedFn& embed,
                                     std::size_t top_l, Warnings* warnings = nullptr);

/// Extracts "- fact" style bullet lines ("-", "*", "•" or "1."). Anything else is ignored.
std::vector<std::string> parse_bullets(std::string_view text);

std::string build_normalize_prompt(const Utterance& utterance);

/// Asks the model for bullet-point facts in the utterance. Backend failures
/// yield an empty list plus a warning.
std::vector<std::string> normalize_knowledge(const Utterance& utterance, ModelClient& client,
                                             std::optional<std::string> agent = std::nullopt,
                                             Warnings* warnings = nullptr);

} // namespace parley
