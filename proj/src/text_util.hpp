// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace parley::detail {

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front()))
        s.remove_prefix(1);
    while (!s.empty() && is_space(s.back()))
        s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

/// Trim, collapse internal whitespace runs, case-fold.
inline std::string fold_name(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char ch : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

/// Scans for `key <sep> value` fields where sep is ':' or '='. Each value runs
/// until the next recognised key or the end of text. Keys match case-insensitively
/// at a word boundary. Returns one (key, value) per occurrence, in text order.
struct KeyedField {
    std::string key;
    std::string value;
};

inline std::vector<KeyedField> scan_keyed_fields(std::string_view text, const std::vector<std::string>& keys) {
    struct Hit {
        std::size_t start;
        std::size_t value_start;
        std::string key;
    };
    const std::string folded = lower(text);
    std::vector<Hit> hits;
    for (const auto& key : keys) {
        std::size_t pos = 0;
        while ((pos = folded.find(key, pos)) != std::string::npos) {
            const bool boundary_before =
                pos == 0 || !(std::isalnum(static_cast<unsigned char>(folded[pos - 1])) || folded[pos - 1] == '_');
            std::size_t p = pos + key.size();
            while (p < folded.size() && (folded[p] == ' ' || folded[p] == '\t' || folded[p] == '*'))
                ++p;
            if (boundary_before && p < folded.size() && (folded[p] == ':' || folded[p] == '=')) {
                hits.push_back({pos, p + 1, key});
                pos = p + 1;
            } else {
                pos += key.size();
            }
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.start < b.start; });
    // Only the first occurrence of a key counts; later ones stay part of the preceding value.
    std::vector<Hit> first;
    for (auto& hit : hits) {
        const bool seen = std::any_of(first.begin(), first.end(), [&](const Hit& h) { return h.key == hit.key; });
        if (!seen) first.push_back(std::move(hit));
    }
    hits = std::move(first);
    std::vector<KeyedField> out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i > 0 && hits[i].start < hits[i - 1].value_start) continue;
        const std::size_t end = i + 1 < hits.size() ? hits[i + 1].start : text.size();
        auto value = trim(text.substr(hits[i].value_start, end - hits[i].value_start));
        // Markdown emphasis and trailing separators that models like to emit.
        while (!value.empty() && (value.back() == ',' || value.back() == ';' || value.back() == '*'))
            value = trim(value.substr(0, value.size() - 1));
        while (!value.empty() && value.front() == '*')
            value = trim(value.substr(1));
        out.push_back({hits[i].key, std::string(value)});
    }
    return out;
}

inline std::optional<std::string> find_field(const std::vector<KeyedField>& fields, std::string_view key) {
    for (const auto& f : fields)
        if (f.key == key) return f.value;
    return std::nullopt;
}

} // namespace parley::detail
