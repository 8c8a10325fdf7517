// SPDX-License-Identifier: Apache-2.0
#include "parley/evaluation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <variant>

#include <fmt/format.h>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

namespace {

constexpr std::array<BreakdownCategory, breakdown_category_count> categories{
    BreakdownCategory::IgnoreQuestion,    BreakdownCategory::IgnoreRequest,
    BreakdownCategory::IgnoreSuggestion,  BreakdownCategory::IgnoreGreeting,
    BreakdownCategory::IgnoreExpectation, BreakdownCategory::UnclearIntention,
    BreakdownCategory::TopicChangeError,  BreakdownCategory::LackOfInformation,
    BreakdownCategory::SelfContradiction, BreakdownCategory::InterlocutorContradiction,
    BreakdownCategory::Repetition,
};

struct CategoryInfo {
    std::string_view name;
    std::string_view level;
    std::string_view description;
};

CategoryInfo info(BreakdownCategory c) {
    switch (c) {
    case BreakdownCategory::IgnoreQuestion:
        return {"IgnoreQuestion", "response", "ignores a question put to the speaker"};
    case BreakdownCategory::IgnoreRequest:
        return {"IgnoreRequest", "response", "ignores a request put to the speaker"};
    case BreakdownCategory::IgnoreSuggestion:
        return {"IgnoreSuggestion", "response", "ignores a suggestion or invitation"};
    case BreakdownCategory::IgnoreGreeting:
        return {"IgnoreGreeting", "response", "ignores a greeting"};
    case BreakdownCategory::IgnoreExpectation:
        return {"IgnoreExpectation", "response", "fails to give the reply the previous utterance clearly expected"};
    case BreakdownCategory::UnclearIntention:
        return {"UnclearIntention", "context", "the purpose of the utterance cannot be understood"};
    case BreakdownCategory::TopicChangeError:
        return {"TopicChangeError", "context", "abruptly changes the topic"};
    case BreakdownCategory::LackOfInformation:
        return {"LackOfInformation", "context", "omits information needed to follow it"};
    case BreakdownCategory::SelfContradiction:
        return {"SelfContradiction", "context", "contradicts what the speaker said earlier"};
    case BreakdownCategory::InterlocutorContradiction:
        return {"InterlocutorContradiction", "context", "contradicts what another participant said"};
    case BreakdownCategory::Repetition:
        return {"Repetition", "context", "repeats content already said"};
    }
    return {"", "", ""};
}

std::string alnum_fold(std::string_view s) {
    std::string out;
    for (unsigned char c : s)
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

std::string render_turns(const Transcript& t) {
    std::string out;
    for (const auto& r : t.records)
        out += fmt::format("Turn {} - {}: {}\n", r.turn_index + 1, r.speaker, r.utterance.text);
    return out;
}

std::string taxonomy_table() {
    std::string out = "| Category | Level | Description |\n|---|---|---|\n";
    for (auto c : categories) {
        const auto i = info(c);
        out += fmt::format("| {} | {} | {} |\n", i.name, i.level, i.description);
    }
    return out;
}

constexpr std::string_view breakdown_format =
    "Answer with exactly one line per turn and nothing else, in the form\n"
    "Turn N: NB\n"
    "or\n"
    "Turn N: B <Category>\n"
    "where <Category> is one of the category names in the table.";

constexpr std::string_view judge_format =
    "Answer with exactly three lines and nothing else:\n"
    "coherence: <1-5>\n"
    "cooperativeness: <1-5>\n"
    "diversity: <1-5>";

struct LineLabel {
    std::size_t turn = 0;
    BreakdownAnnotation annotation;
};

// Parses one "Turn N: NB" / "Turn N: B <category>" line. nullopt when the line is
// not a turn line at all; an error string when it is one but malformed.
std::optional<std::variant<LineLabel, std::string>> parse_turn_line(std::string_view raw) {
    std::string line;
    for (char c : detail::trim(raw))
        if (c != '*' && c != '`') line.push_back(c);
    auto view = detail::trim(line);
    while (!view.empty() && (view.front() == '-' || view.front() == '#'))
        view = detail::trim(view.substr(1));
    if (detail::lower(view.substr(0, 4)) != "turn") return std::nullopt;
    view = detail::trim(view.substr(4));
    std::size_t turn = 0;
    const auto [ptr, ec] = std::from_chars(view.data(), view.data() + view.size(), turn);
    if (ec != std::errc{} || ptr == view.data()) return std::nullopt;
    view = detail::trim(view.substr(static_cast<std::size_t>(ptr - view.data())));
    if (view.empty() || (view.front() != ':' && view.front() != '-' && view.front() != '.' && view.front() != '='))
        return std::variant<LineLabel, std::string>(fmt::format("turn {}: missing ':' separator", turn));
    view = detail::trim(view.substr(1));

    const auto word_end = view.find_first_of(" \t(:-[");
    const auto label = detail::upper(view.substr(0, word_end));
    auto rest = word_end == std::string_view::npos ? std::string_view{} : view.substr(word_end);
    LineLabel out;
    out.turn = turn;
    out.annotation.turn_index = static_cast<int>(turn) - 1;
    if (label == "NB") {
        out.annotation.label = BreakdownLabel::NotBreakdown;
        return out;
    }
    if (label != "B") return std::variant<LineLabel, std::string>(fmt::format("turn {}: unknown label '{}'", turn, label));
    const auto category = parse_breakdown_category(rest);
    if (!category)
        return std::variant<LineLabel, std::string>(
            fmt::format("turn {}: unknown breakdown category '{}'", turn, detail::trim(rest)));
    out.annotation.label = BreakdownLabel::Breakdown;
    out.annotation.category = category;
    return out;
}

std::vector<Message> judge_messages(std::string prompt) {
    return {{"system", "You are a careful evaluator of multi-party conversations."}, {"user", std::move(prompt)}};
}

} // namespace

std::string_view to_string(BreakdownCategory c) noexcept {
    return info(c).name;
}

std::optional<BreakdownCategory> parse_breakdown_category(std::string_view text) {
    const auto key = alnum_fold(text);
    if (key.empty()) return std::nullopt;
    for (auto c : categories)
        if (alnum_fold(info(c).name) == key) return c;
    return std::nullopt;
}

std::span<const BreakdownCategory> all_breakdown_categories() noexcept {
    return categories;
}

void to_json(json& j, const BreakdownAnnotation& a) {
    j = json{{"turn_index", a.turn_index},
             {"label", a.label == BreakdownLabel::Breakdown ? "B" : "NB"},
             {"category", a.category ? json(to_string(*a.category)) : json(nullptr)}};
}

void from_json(const json& j, BreakdownAnnotation& a) {
    a.turn_index = j.at("turn_index").get<int>();
    const auto label = j.at("label").get<std::string>();
    if (label == "B")
        a.label = BreakdownLabel::Breakdown;
    else if (label == "NB")
        a.label = BreakdownLabel::NotBreakdown;
    else
        throw ParseError("unknown breakdown label '" + label + "'");
    a.category.reset();
    if (j.contains("category") && !j.at("category").is_null()) {
        const auto name = j.at("category").get<std::string>();
        a.category = parse_breakdown_category(name);
        if (!a.category) throw ParseError("unknown breakdown category '" + name + "'");
    }
    if ((a.label == BreakdownLabel::Breakdown) != a.category.has_value())
        throw ParseError("breakdown annotations carry a category exactly when labelled B");
}

std::string build_breakdown_prompt(const Transcript& t) {
    return fmt::format(
        "Below is a {}-turn conversation among players of a murder mystery game.\n"
        "For every turn, decide whether the utterance leads to a dialogue breakdown, meaning the\n"
        "conversation can no longer proceed smoothly after it. Label breakdowns B and give the\n"
        "single best matching category from the table; label everything else NB.\n\n"
        "# Categories\n{}\n# Conversation\n{}\n# Output\n{}",
        t.records.size(), taxonomy_table(), render_turns(t), breakdown_format);
}

std::string build_turn_breakdown_prompt(const Transcript& t, std::size_t turn) {
    if (turn >= t.records.size()) throw std::out_of_range("turn outside transcript");
    std::string context;
    for (std::size_t i = 0; i < turn; ++i)
        context += fmt::format("Turn {} - {}: {}\n", i + 1, t.records[i].speaker, t.records[i].utterance.text);
    const auto& r = t.records[turn];
    return fmt::format(
        "Below is the start of a conversation among players of a murder mystery game, followed by\n"
        "one utterance to judge. Decide whether that utterance leads to a dialogue breakdown,\n"
        "meaning the conversation can no longer proceed smoothly after it.\n\n"
        "# Categories\n{}\n# Conversation so far\n{}\n# Utterance to judge\nTurn {} - {}: {}\n\n"
        "# Output\nAnswer with exactly one line: \"Turn {}: NB\" or \"Turn {}: B <Category>\".",
        taxonomy_table(), context.empty() ? "(none)\n" : context, turn + 1, r.speaker, r.utterance.text, turn + 1,
        turn + 1);
}

std::string build_judge_prompt(const Transcript& t) {
    return fmt::format(
        "Below is a conversation among players of a murder mystery game. Rate it on three criteria,\n"
        "each as an integer from 1 (very poor) to 5 (excellent):\n"
        "- coherence: the conversation flows logically and utterances follow from one another;\n"
        "- cooperativeness: participants respond to each other and work toward the shared goal;\n"
        "- diversity: participants contribute varied content, viewpoints and information.\n\n"
        "# Conversation\n{}\n# Output\n{}",
        render_turns(t), judge_format);
}

BreakdownParse parse_breakdown_output(std::string_view text, std::size_t turn_count) {
    BreakdownParse result;
    std::vector<std::optional<BreakdownAnnotation>> slots(turn_count);
    for (auto line : detail::split_lines(text)) {
        auto parsed = parse_turn_line(line);
        if (!parsed) continue;
        if (auto* error = std::get_if<std::string>(&*parsed)) {
            result.error = *error;
            return result;
        }
        auto& label = std::get<LineLabel>(*parsed);
        if (label.turn < 1 || label.turn > turn_count) {
            result.error = fmt::format("turn {} outside 1..{}", label.turn, turn_count);
            return result;
        }
        auto& slot = slots[label.turn - 1];
        if (slot) {
            result.error = fmt::format("turn {} labelled twice", label.turn);
            return result;
        }
        slot = label.annotation;
    }
    for (std::size_t i = 0; i < turn_count; ++i) {
        if (!slots[i]) {
            result.error = fmt::format("turn {} has no label", i + 1);
            return result;
        }
        result.annotations.push_back(*slots[i]);
    }
    return result;
}

JudgeParse parse_judge_scores(std::string_view text) {
    JudgeParse result;
    const auto fields = detail::scan_keyed_fields(text, {"coherence", "cooperativeness", "diversity"});
    JudgeScores scores;
    for (auto [key, target] : {std::pair{"coherence", &scores.coherence},
                               std::pair{"cooperativeness", &scores.cooperativeness},
                               std::pair{"diversity", &scores.diversity}}) {
        const auto value = detail::find_field(fields, key);
        if (!value) {
            result.error = fmt::format("missing {}", key);
            return result;
        }
        int score = 0;
        const auto v = detail::trim(*value);
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), score);
        if (ec != std::errc{} || ptr == v.data()) {
            result.error = fmt::format("{} is not an integer: '{}'", key, v);
            return result;
        }
        // "4/5" is fine; "4.5" is not an integer score.
        if (ptr != v.data() + v.size() && *ptr == '.') {
            result.error = fmt::format("{} is not an integer: '{}'", key, v);
            return result;
        }
        if (score < 1 || score > 5) {
            result.error = fmt::format("{} out of range 1-5: {}", key, score);
            return result;
        }
        *target = score;
    }
    result.scores = scores;
    return result;
}

namespace {

void require_complete(const Transcript& t) {
    if (t.status != TranscriptStatus::Complete)
        throw EvaluationError("transcript " + t.session_id + " is incomplete");
    if (t.records.empty()) throw EvaluationError("transcript " + t.session_id + " has no turns");
}

BreakdownParse ask_breakdowns(ModelClient& client, std::string prompt, std::size_t turn_count) {
    auto messages = judge_messages(std::move(prompt));
    auto response = client.chat(Purpose::JudgeBreakdown, messages);
    auto parsed = parse_breakdown_output(response, turn_count);
    if (!parsed.error) return parsed;
    messages.push_back({"assistant", response});
    messages.push_back({"user", "That answer could not be used (" + *parsed.error + "). " + std::string(breakdown_format)});
    response = client.chat(Purpose::JudgeBreakdown, messages);
    return parse_breakdown_output(response, turn_count);
}

} // namespace

std::vector<BreakdownAnnotation> analyze_breakdowns(const Transcript& t, ModelClient& client,
                                                    const EvaluationOptions& options) {
    require_complete(t);
    if (!options.per_turn_breakdown) {
        auto parsed = ask_breakdowns(client, build_breakdown_prompt(t), t.records.size());
        if (parsed.error) throw EvaluationError("breakdown labels for " + t.session_id + ": " + *parsed.error);
        return parsed.annotations;
    }
    std::vector<BreakdownAnnotation> out;
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        auto messages = judge_messages(build_turn_breakdown_prompt(t, i));
        std::optional<BreakdownAnnotation> label;
        std::string error;
        for (int attempt = 0; attempt < 2 && !label; ++attempt) {
            const auto response = client.chat(Purpose::JudgeBreakdown, messages);
            error = fmt::format("turn {} has no label", i + 1);
            for (auto line : detail::split_lines(response)) {
                auto parsed = parse_turn_line(line);
                if (!parsed) continue;
                if (auto* e = std::get_if<std::string>(&*parsed)) {
                    error = *e;
                    break;
                }
                const auto& l = std::get<LineLabel>(*parsed);
                if (l.turn != i + 1) {
                    error = fmt::format("expected turn {}, got turn {}", i + 1, l.turn);
                    break;
                }
                label = l.annotation;
                break;
            }
            if (!label) {
                messages.push_back({"assistant", response});
                messages.push_back({"user", "That answer could not be used (" + error + "). Answer with exactly one line: "
                                                "\"Turn N: NB\" or \"Turn N: B <Category>\"."});
            }
        }
        if (!label) throw EvaluationError("breakdown label for " + t.session_id + ": " + error);
        out.push_back(*label);
    }
    return out;
}

int count_breakdowns(std::span<const BreakdownAnnotation> annotations) noexcept {
    return static_cast<int>(std::count_if(annotations.begin(), annotations.end(),
                                          [](const auto& a) { return a.label == BreakdownLabel::Breakdown; }));
}

JudgeScores judge_transcript(const Transcript& t, ModelClient& client) {
    require_complete(t);
    auto messages = judge_messages(build_judge_prompt(t));
    auto response = client.chat(Purpose::JudgeScores, messages);
    auto parsed = parse_judge_scores(response);
    if (parsed.scores) return *parsed.scores;
    messages.push_back({"assistant", response});
    messages.push_back({"user", "That answer could not be used (" + *parsed.error + "). " + std::string(judge_format)});
    response = client.chat(Purpose::JudgeScores, messages);
    parsed = parse_judge_scores(response);
    if (parsed.scores) return *parsed.scores;
    throw EvaluationError("judge scores for " + t.session_id + ": " + *parsed.error);
}

namespace {
constexpr std::array<std::string_view, 4> metric_names{metric_breakdown_count, metric_coherence,
                                                       metric_cooperativeness, metric_diversity};
}

std::span<const std::string_view> all_metrics() noexcept {
    return metric_names;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile outside [0, 1]");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MetricSummary summarize_metric(std::vector<double> values) {
    MetricSummary s;
    s.values = std::move(values);
    if (s.values.empty()) return s;
    for (double v : s.values)
        ++s.histogram[static_cast<int>(std::lround(v))];
    std::vector<double> sorted = s.values;
    std::sort(sorted.begin(), sorted.end());
    s.median = quantile_sorted(sorted, 0.5);
    s.q1 = quantile_sorted(sorted, 0.25);
    s.q3 = quantile_sorted(sorted, 0.75);
    return s;
}

double ConditionSummary::evaluable_fraction() const noexcept {
    const int total = evaluated + excluded;
    return total == 0 ? 0.0 : static_cast<double>(evaluated) / total;
}

ConditionSummary aggregate_condition(std::span<const TranscriptEvaluation> results, Condition condition,
                                     int excluded) {
    std::map<std::string_view, std::vector<double>> columns;
    int evaluated = 0;
    for (const auto& r : results) {
        if (r.condition != condition) continue;
        ++evaluated;
        columns[metric_breakdown_count].push_back(r.breakdown_count());
        columns[metric_coherence].push_back(r.scores.coherence);
        columns[metric_cooperativeness].push_back(r.scores.cooperativeness);
        columns[metric_diversity].push_back(r.scores.diversity);
    }
    if (evaluated == 0)
        throw std::invalid_argument("no evaluated transcripts for condition " + std::string(to_string(condition)));
    ConditionSummary s;
    s.condition = condition;
    s.evaluated = evaluated;
    s.excluded = excluded;
    for (auto name : metric_names)
        s.metrics.emplace(std::string(name), summarize_metric(std::move(columns[name])));
    return s;
}

json aggregate_to_json(const AggregateReport& report) {
    json conditions = json::array();
    for (const auto& c : report.conditions) {
        json metrics = json::object();
        for (const auto& [name, m] : c.metrics) {
            json histogram = json::object();
            for (const auto& [bin, count] : m.histogram)
                histogram[std::to_string(bin)] = count;
            metrics[name] = json{{"values", m.values}, {"histogram", histogram}, {"median", m.median},
                                 {"q1", m.q1},         {"q3", m.q3},            {"n", m.values.size()}};
        }
        conditions.push_back(json{{"condition", to_string(c.condition)},
                                  {"evaluated", c.evaluated},
                                  {"excluded", c.excluded},
                                  {"evaluable_fraction", c.evaluable_fraction()},
                                  {"meets_evaluable_threshold", c.evaluable_fraction() >= min_evaluable_fraction},
                                  {"metrics", metrics}});
    }
    return json{{"schema_version", 1}, {"conditions", conditions}};
}

AggregateReport aggregate_from_json(const json& j) {
    AggregateReport report;
    try {
        for (const auto& c : j.at("conditions")) {
            ConditionSummary s;
            s.condition = parse_condition(c.at("condition").get<std::string>());
            s.evaluated = c.value("evaluated", 0);
            s.excluded = c.value("excluded", 0);
            for (const auto& [name, m] : c.at("metrics").items())
                s.metrics.emplace(name, summarize_metric(m.at("values").get<std::vector<double>>()));
            report.conditions.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed aggregate report: ") + e.what());
    }
    return report;
}

std::string aggregate_to_csv(const AggregateReport& report) {
    std::string out = "condition,metric,value,count\n";
    for (const auto& c : report.conditions)
        for (const auto& [name, m] : c.metrics)
            for (const auto& [bin, count] : m.histogram)
                out += fmt::format("{},{},{},{}\n", to_string(c.condition), name, bin, count);
    return out;
}

} // namespace parley
