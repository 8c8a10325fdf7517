// SPDX-License-Identifier: Apache-2.0
#include "parley/transcript.hpp"

#include <algorithm>
#include <ctime>
#include <sstream>

#include <fmt/format.h>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

json transcript_header(const Transcript& t) {
    return json{{"type", "header"},
                {"schema_version", transcript_schema_version},
                {"session_id", t.session_id},
                {"scenario_title", t.scenario_title},
                {"condition", to_string(t.condition)},
                {"seed", t.seed},
                {"turn_budget", t.turn_budget},
                {"history_window_k", t.history_window_k},
                {"retrieval_top_l", t.retrieval_top_l},
                {"memory_mode", to_string(t.memory_mode)},
                {"rng", t.rng_algorithm},
                {"call_log_ref", t.call_log_ref},
                {"created_at", t.created_at},
                {"tool_version", t.tool_version}};
}

json transcript_footer(const Transcript& t) {
    json failure = nullptr;
    if (t.failure) failure = json{{"turn_index", t.failure->turn_index}, {"message", t.failure->message}};
    return json{{"type", "footer"},
                {"status", to_string(t.status)},
                {"turns", t.records.size()},
                {"failure", failure},
                {"knowledge_store", t.knowledge_store}};
}

namespace {
json turn_line(const TurnRecord& r) {
    json j = r;
    j["type"] = "turn";
    return j;
}
} // namespace

std::string transcript_to_jsonl(const Transcript& t) {
    std::string out = transcript_header(t).dump() + "\n";
    for (const auto& r : t.records)
        out += turn_line(r).dump() + "\n";
    out += transcript_footer(t).dump() + "\n";
    return out;
}

void write_transcript(const Transcript& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << transcript_to_jsonl(t);
    if (!out) throw Error("write failed for " + path.string());
}

Transcript parse_transcript(std::string_view text) {
    Transcript t;
    bool have_header = false;
    bool have_footer = false;
    std::size_t line_no = 0;
    for (auto line : detail::split_lines(text)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        if (have_footer) throw ParseError("content after footer", line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        try {
            const auto type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "header") throw ParseError("first line must be the header", line_no);
                if (j.at("schema_version").get<int>() != transcript_schema_version)
                    throw ParseError("unsupported transcript schema_version", line_no);
                t.session_id = j.at("session_id").get<std::string>();
                t.scenario_title = j.at("scenario_title").get<std::string>();
                t.condition = parse_condition(j.at("condition").get<std::string>());
                t.seed = j.at("seed").get<std::uint64_t>();
                t.turn_budget = j.at("turn_budget").get<int>();
                t.history_window_k = j.value("history_window_k", t.history_window_k);
                t.retrieval_top_l = j.value("retrieval_top_l", t.retrieval_top_l);
                t.memory_mode = parse_memory_mode(j.value("memory_mode", std::string("shared")));
                t.rng_algorithm = j.value("rng", t.rng_algorithm);
                t.call_log_ref = j.value("call_log_ref", std::string());
                t.created_at = j.value("created_at", std::string());
                t.tool_version = j.value("tool_version", std::string());
                have_header = true;
            } else if (type == "turn") {
                auto record = j.get<TurnRecord>();
                if (record.turn_index != static_cast<int>(t.records.size()))
                    throw ParseError(fmt::format("expected turn_index {}, found {}", t.records.size(), record.turn_index),
                                     line_no);
                t.records.push_back(std::move(record));
            } else if (type == "footer") {
                const auto status = j.at("status").get<std::string>();
                if (status == "Complete")
                    t.status = TranscriptStatus::Complete;
                else if (status == "Incomplete")
                    t.status = TranscriptStatus::Incomplete;
                else
                    throw ParseError("unknown status '" + status + "'", line_no);
                if (j.contains("failure") && !j.at("failure").is_null())
                    t.failure = SessionFailure{j.at("failure").at("turn_index").get<int>(),
                                               j.at("failure").at("message").get<std::string>()};
                t.knowledge_store = j.value("knowledge_store", std::vector<KnowledgeEntry>{});
                have_footer = true;
            } else {
                throw ParseError("unknown line type '" + type + "'", line_no);
            }
        } catch (const ParseError& e) {
            if (e.line()) throw;
            throw ParseError(e.what(), line_no);
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    if (!have_header) throw ParseError("missing header", line_no == 0 ? 1 : line_no);
    if (!have_footer) t.status = TranscriptStatus::Incomplete;
    if (t.status == TranscriptStatus::Complete && static_cast<int>(t.records.size()) != t.turn_budget)
        throw ParseError(fmt::format("Complete transcript has {} of {} turns", t.records.size(), t.turn_budget),
                         line_no);
    return t;
}

Transcript read_transcript(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_transcript(buffer.str());
}

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path, const Transcript& header)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << transcript_header(header).dump() << '\n' << std::flush;
}

void TranscriptWriter::write_turn(const TurnRecord& record) {
    out_ << turn_line(record).dump() << '\n' << std::flush;
}

void TranscriptWriter::finish(const Transcript& t) {
    out_ << transcript_footer(t).dump() << '\n' << std::flush;
    out_.close();
}

std::string render_transcript(const Transcript& t, bool verbose) {
    std::string out;
    out += fmt::format("Session {} ({}, seed {})\n", t.session_id, to_string(t.condition), t.seed);
    out += fmt::format("Scenario: {}\n", t.scenario_title);
    out += fmt::format("Status: {}, {}/{} turns\n", to_string(t.status), t.records.size(), t.turn_budget);
    if (t.failure) out += fmt::format("Failure at turn {}: {}\n", t.failure->turn_index + 1, t.failure->message);
    for (const auto& r : t.records) {
        out += fmt::format("\n[Turn {}] {} ({})\n", r.turn_index + 1, r.speaker, to_string(r.selection_reason));
        if (r.constraint_applied) out += fmt::format("  owes: {}\n", *r.constraint_applied);
        out += fmt::format("  {}: {}\n", r.speaker, r.utterance.text);
        if (r.detection && r.detection->is_first_pair_part) {
            out += fmt::format("  >> {} addressed to {}", to_string(r.detection->pair_type),
                               r.detection->addressee_name.value_or(r.detection->raw_addressee.value_or("no one")));
            if (r.designated_next) out += fmt::format("; next: {}", *r.designated_next);
            out += "\n";
        }
        for (const auto& w : r.warnings)
            out += fmt::format("  ! {}\n", w);
        if (verbose) {
            for (const auto& thought : r.think_outputs)
                out += fmt::format("  - {} [{} {}] {}\n", thought.agent, to_string(thought.output.action),
                                   thought.output.importance, thought.output.thought);
            for (const auto& k : r.knowledge)
                out += fmt::format("  + {}\n", k);
        }
    }
    return out;
}

json strip_volatile(json j) {
    if (j.is_object()) {
        j.erase("created_at");
        j.erase("latency_ms");
        for (auto& [key, value] : j.items())
            value = strip_volatile(std::move(value));
    } else if (j.is_array()) {
        for (auto& value : j)
            value = strip_volatile(std::move(value));
    }
    return j;
}

std::string canonical_file(const std::filesystem::path& path, bool sort_lines) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const auto text = buffer.str();
    std::vector<std::string> lines;
    if (json::accept(text)) {
        lines.push_back(strip_volatile(json::parse(text)).dump());
    } else {
        for (auto line : detail::split_lines(text)) {
            if (detail::trim(line).empty()) continue;
            auto j = strip_volatile(json::parse(line));
            // Append order is what sorting discards; the sequence number only records it.
            if (sort_lines && j.is_object()) j.erase("seq");
            lines.push_back(j.dump());
        }
    }
    if (sort_lines) std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines)
        out += l + "\n";
    return out;
}

std::string current_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace parley
