// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>

#include "parley/engine.hpp"

namespace parley {

inline constexpr int transcript_schema_version = 1;

/// Transcript files are JSONL: a header object, one object per turn, then a
/// footer with the status and the knowledge store. A file without a footer
/// reads back as Incomplete, so partially written sessions stay usable.
json transcript_header(const Transcript& t);
json transcript_footer(const Transcript& t);

std::string transcript_to_jsonl(const Transcript& t);
void write_transcript(const Transcript& t, const std::filesystem::path& path);

/// Throws ParseError carrying the 1-based line number of the first bad line.
Transcript parse_transcript(std::string_view text);
Transcript read_transcript(const std::filesystem::path& path);

/// Streams a transcript to disk as the session runs.
class TranscriptWriter {
public:
    TranscriptWriter(const std::filesystem::path& path, const Transcript& header);

    void write_turn(const TurnRecord& record);
    void finish(const Transcript& t);

private:
    std::ofstream out_;
};

/// Human-readable rendering for manual review: numbered turns, speakers,
/// detection and constraint markers. verbose adds every agent's think output.
std::string render_transcript(const Transcript& t, bool verbose = false);

/// Removes fields that legitimately vary between identical runs
/// ("created_at", "latency_ms") at any depth.
json strip_volatile(json j);

/// Canonical form of a JSON or JSONL file for determinism comparisons.
/// sort_lines orders JSONL lines and drops their "seq" field, for logs whose
/// append order is not fixed (concurrent think calls).
std::string canonical_file(const std::filesystem::path& path, bool sort_lines = false);

std::string current_timestamp();

} // namespace parley
