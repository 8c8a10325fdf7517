// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "parley/error.hpp"
#include "parley/transcript.hpp"
#include "support.hpp"

using namespace parley;
using parley::testing::golden_transcript_path;
using parley::testing::read_file;
using parley::testing::TempDir;
using parley::testing::write_file;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto end = text.find('\n', start);
        out.push_back(text.substr(start, end - start));
        start = end == std::string::npos ? text.size() : end + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines)
        out += l + "\n";
    return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1))
        ++n;
    return n;
}

std::size_t error_line(const std::string& text) {
    try {
        parse_transcript(text);
    } catch (const ParseError& e) {
        return e.line().value_or(0);
    }
    return 0;
}

} // namespace

TEST(Transcript, RoundTripIsExact) {
    const auto text = read_file(golden_transcript_path());
    const auto t = parse_transcript(text);
    EXPECT_EQ(t.status, TranscriptStatus::Complete);
    EXPECT_EQ(t.records.size(), 10u);
    EXPECT_EQ(transcript_to_jsonl(t), text);
}

TEST(Transcript, WriterMatchesWholeFileSerialization) {
    const auto t = read_transcript(golden_transcript_path());
    TempDir dir;
    {
        TranscriptWriter writer(dir / "t.jsonl", t);
        for (const auto& r : t.records)
            writer.write_turn(r);
        writer.finish(t);
    }
    EXPECT_EQ(read_file(dir / "t.jsonl"), transcript_to_jsonl(t));
    write_transcript(t, dir / "u.jsonl");
    EXPECT_EQ(read_file(dir / "u.jsonl"), transcript_to_jsonl(t));
}

TEST(Transcript, MissingFooterReadsAsIncomplete) {
    auto lines = lines_of(read_file(golden_transcript_path()));
    lines.resize(5); // header + 4 turns
    const auto t = parse_transcript(join(lines));
    EXPECT_EQ(t.status, TranscriptStatus::Incomplete);
    EXPECT_EQ(t.records.size(), 4u);
    EXPECT_TRUE(t.knowledge_store.empty());
}

TEST(Transcript, ErrorsCarryLineNumbers) {
    const auto lines = lines_of(read_file(golden_transcript_path()));
    auto corrupt = lines;
    corrupt[3] = "{\"type\":\"turn\",";
    EXPECT_EQ(error_line(join(corrupt)), 4u);

    auto reordered = lines;
    std::swap(reordered[2], reordered[3]);
    EXPECT_EQ(error_line(join(reordered)), 3u);

    auto headless = lines;
    headless.erase(headless.begin());
    EXPECT_EQ(error_line(join(headless)), 1u);

    auto trailing = lines;
    trailing.push_back(lines[1]);
    EXPECT_EQ(error_line(join(trailing)), lines.size() + 1);

    auto short_complete = lines;
    short_complete.erase(short_complete.begin() + 10);
    EXPECT_GT(error_line(join(short_complete)), 0u);

    auto version = lines;
    auto header = json::parse(version[0]);
    header["schema_version"] = 7;
    version[0] = header.dump();
    EXPECT_EQ(error_line(join(version)), 1u);
    EXPECT_EQ(error_line(""), 1u);
}

TEST(Transcript, FailureRoundTrips) {
    auto t = read_transcript(golden_transcript_path());
    t.records.resize(3);
    t.status = TranscriptStatus::Incomplete;
    t.failure = SessionFailure{3, "backend unavailable"};
    const auto back = parse_transcript(transcript_to_jsonl(t));
    ASSERT_TRUE(back.failure);
    EXPECT_EQ(back.failure->turn_index, 3);
    EXPECT_EQ(back.failure->message, "backend unavailable");
    EXPECT_EQ(back.status, TranscriptStatus::Incomplete);
}

TEST(Render, NumberedBlocksAndMarkers) {
    const auto t = read_transcript(golden_transcript_path());
    const auto text = render_transcript(t);
    EXPECT_EQ(count(text, "\n[Turn "), 10u);
    EXPECT_NE(text.find("[Turn 1] Hana Morrow (FirstTurnRandom)"), std::string::npos);
    EXPECT_NE(text.find("[Turn 4] Leona Brandt (Designated)"), std::string::npos);
    EXPECT_NE(text.find("  owes: "), std::string::npos);
    EXPECT_NE(text.find(">> "), std::string::npos);
    EXPECT_NE(text.find("  ! "), std::string::npos);
    EXPECT_EQ(text.find("  - Hana Morrow ["), std::string::npos);
    EXPECT_EQ(render_transcript(t), text);

    const auto verbose = render_transcript(t, true);
    EXPECT_EQ(count(verbose, "  - Hana Morrow ["), 10u);
    EXPECT_NE(verbose.find("  + "), std::string::npos);
}

TEST(Canonical, StripsVolatileFieldsAtAnyDepth) {
    const json j{{"created_at", "x"}, {"a", {{"latency_ms", 5}, {"b", 1}}}, {"list", {{{"latency_ms", 1}}}}};
    EXPECT_EQ(strip_volatile(j), (json{{"a", {{"b", 1}}}, {"list", {json::object()}}}));
}

TEST(Canonical, FilesCompareModuloTimestampsAndOrder) {
    TempDir dir;
    write_file(dir / "a.jsonl", "{\"seq\":1,\"r\":\"x\",\"latency_ms\":3}\n{\"seq\":2,\"r\":\"y\",\"latency_ms\":9}\n");
    write_file(dir / "b.jsonl", "{\"seq\":1,\"r\":\"y\",\"latency_ms\":1}\n\n{\"seq\":2,\"r\":\"x\",\"latency_ms\":4}\n");
    EXPECT_NE(canonical_file(dir / "a.jsonl"), canonical_file(dir / "b.jsonl"));
    EXPECT_EQ(canonical_file(dir / "a.jsonl", true), canonical_file(dir / "b.jsonl", true));

    write_file(dir / "m.json", "{\n  \"created_at\": \"now\",\n  \"n\": 1\n}\n");
    EXPECT_EQ(canonical_file(dir / "m.json"), "{\"n\":1}\n");
    EXPECT_THROW(canonical_file(dir / "missing.json"), Error);
}

TEST(Timestamp, IsoUtc) {
    const auto ts = current_timestamp();
    ASSERT_EQ(ts.size(), 20u);
    EXPECT_EQ(ts[10], 'T');
    EXPECT_EQ(ts.back(), 'Z');
}
