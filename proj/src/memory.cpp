// SPDX-License-Identifier: Apache-2.0
#include "parley/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

namespace {
void warn(Warnings* sink, std::string message) {
    spdlog::warn("{}", message);
    if (sink) sink->push_back(std::move(message));
}
} // namespace

HistoryWindow::HistoryWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("history window capacity must be positive");
}

void HistoryWindow::append(Utterance utterance) {
    entries_.push_back(std::move(utterance));
    while (entries_.size() > capacity_)
        entries_.pop_front();
}

ShortTermHistory::ShortTermHistory(std::string owner, std::size_t capacity)
    : owner_(std::move(owner)), capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("short-term history capacity must be positive");
}

void ShortTermHistory::append(std::string entry) {
    ++appended_;
    entries_.push_back(std::move(entry));
    while (entries_.size() > capacity_)
        entries_.pop_front();
}

void to_json(json& j, const KnowledgeEntry& e) {
    j = json{{"text", e.text},
             {"embedding", e.embedding},
             {"source_turn", e.source_turn},
             {"source_speaker", e.source_speaker}};
    if (e.owner) j["owner"] = *e.owner;
}

void from_json(const json& j, KnowledgeEntry& e) {
    e.text = j.at("text").get<std::string>();
    e.embedding = j.at("embedding").get<Embedding>();
    e.source_turn = j.at("source_turn").get<int>();
    e.source_speaker = j.at("source_speaker").get<std::string>();
    e.owner = j.contains("owner") && !j.at("owner").is_null() ? std::optional(j.at("owner").get<std::string>())
                                                                : std::nullopt;
}

void LongTermStore::append(KnowledgeEntry entry) {
    if (entry.embedding.empty()) throw ConfigError("knowledge entry without embedding");
    if (!entries_.empty() && entries_.front().embedding.size() != entry.embedding.size())
        throw ConfigError("knowledge embedding dimension " + std::to_string(entry.embedding.size()) +
                          " differs from store dimension " + std::to_string(entries_.front().embedding.size()));
    entries_.push_back(std::move(entry));
}

std::optional<std::size_t> LongTermStore::dimension() const noexcept {
    if (entries_.empty()) return std::nullopt;
    return entries_.front().embedding.size();
}

std::uint64_t LongTermStore::digest() const {
    std::uint64_t h = detail::fnv1a("");
    for (const auto& e : entries_) {
        h = detail::fnv1a(e.text, h);
        h = detail::fnv1a(e.source_speaker, h);
        h = detail::fnv1a(std::to_string(e.source_turn), h);
        for (double x : e.embedding) {
            char bytes[sizeof(double)];
            std::memcpy(bytes, &x, sizeof(double));
            h = detail::fnv1a(std::string_view(bytes, sizeof(double)), h);
        }
    }
    return h;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {
bool is_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}
} // namespace

std::vector<ScoredEntry> rank_entries(const LongTermStore& store, std::span<const double> query, std::size_t top_l,
                                      Warnings* warnings) {
    if (store.empty() || top_l == 0) return {};
    if (is_zero(query)) {
        warn(warnings, "retrieval query embedding has zero norm; nothing retrieved");
        return {};
    }
    const auto entries = store.entries();
    std::vector<ScoredEntry> scored;
    scored.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (is_zero(entries[i].embedding)) {
            warn(warnings, "knowledge entry '" + entries[i].text + "' has a zero-norm embedding; skipped");
            continue;
        }
        scored.push_back({i, cosine_similarity(query, entries[i].embedding)});
    }
    std::stable_sort(scored.begin(), scored.end(), [&](const ScoredEntry& a, const ScoredEntry& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return entries[a.index].source_turn > entries[b.index].source_turn;
    });
    if (scored.size() > top_l) scored.resize(top_l);
    return scored;
}

std::vector<KnowledgeEntry> retrieve(const LongTermStore& store, std::string_view query, const EmbedFn& embed,
                                     std::size_t top_l, Warnings* warnings) {
    if (store.empty()) return {};
    Embedding query_vec;
    try {
        query_vec = embed(query);
    } catch (const std::exception& e) {
        warn(warnings, std::string("embedding the retrieval query failed: ") + e.what());
        return {};
    }
    if (store.dimension() && query_vec.size() != *store.dimension()) {
        warn(warnings, "retrieval query dimension does not match the store; nothing retrieved");
        return {};
    }
    std::vector<KnowledgeEntry> out;
    for (const auto& s : rank_entries(store, query_vec, top_l, warnings))
        out.push_back(store.entries()[s.index]);
    return out;
}

std::vector<std::string> parse_bullets(std::string_view text) {
    std::vector<std::string> facts;
    for (auto line : detail::split_lines(text)) {
        line = detail::trim(line);
        std::string_view body;
        if (line.starts_with("- ") || line.starts_with("* ")) {
            body = line.substr(2);
        } else if (line.starts_with("\xe2\x80\xa2")) { // U+2022 bullet
            body = line.substr(3);
        } else {
            std::size_t digits = 0;
            while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits])))
                ++digits;
            if (digits > 0 && digits + 1 < line.size() && (line[digits] == '.' || line[digits] == ')') &&
                line[digits + 1] == ' ')
                body = line.substr(digits + 2);
        }
        body = detail::trim(body);
        if (!body.empty()) facts.emplace_back(body);
    }
    return facts;
}

std::string build_normalize_prompt(const Utterance& utterance) {
    std::string prompt;
    prompt += "Extract the important facts and information from the utterance below.\n";
    prompt += "Write each fact as one self-contained bullet line starting with \"- \".\n";
    prompt += "Name the people involved explicitly instead of using pronouns.\n";
    prompt += "If the utterance contains no factual content, reply with nothing.\n\n";
    prompt += "Speaker: " + utterance.speaker_name + "\n";
    prompt += "Utterance: " + utterance.text + "\n";
    return prompt;
}

std::vector<std::string> normalize_knowledge(const Utterance& utterance, ModelClient& client,
                                             std::optional<std::string> agent, Warnings* warnings) {
    if (detail::trim(utterance.text).empty()) return {};
    try {
        const auto response = client.chat(
            Purpose::Normalize,
            {{"system", "You turn conversation into concise factual notes."}, {"user", build_normalize_prompt(utterance)}},
            std::move(agent));
        return parse_bullets(response);
    } catch (const BackendError& e) {
        warn(warnings, std::string("knowledge normalization failed: ") + e.what());
        return {};
    }
}

} // namespace parley
