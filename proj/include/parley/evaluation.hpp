// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parley/backend.hpp"
#include "parley/engine.hpp"

namespace parley {

/// Utterance-level breakdown categories: response-level (ignoring a question,
/// request, suggestion, greeting or expectation) and context-level errors.
enum class BreakdownCategory {
    IgnoreQuestion,
    IgnoreRequest,
    IgnoreSuggestion,
    IgnoreGreeting,
    IgnoreExpectation,
    UnclearIntention,
    TopicChangeError,
    LackOfInformation,
    SelfContradiction,
    InterlocutorContradiction,
    Repetition,
};

inline constexpr std::size_t breakdown_category_count = 11;

std::string_view to_string(BreakdownCategory c) noexcept;
/// Ignores case, spaces, '-' and '_': "ignore question" and "Ignore_Question" both parse.
std::optional<BreakdownCategory> parse_breakdown_category(std::string_view text);
std::span<const BreakdownCategory> all_breakdown_categories() noexcept;

enum class BreakdownLabel { Breakdown, NotBreakdown };

struct BreakdownAnnotation {
    int turn_index = 0;
    BreakdownLabel label = BreakdownLabel::NotBreakdown;
    std::optional<BreakdownCategory> category;

    friend bool operator==(const BreakdownAnnotation&, const BreakdownAnnotation&) = default;
};

void to_json(json& j, const BreakdownAnnotation& a);
void from_json(const json& j, BreakdownAnnotation& a);

struct JudgeScores {
    int coherence = 0;
    int cooperativeness = 0;
    int diversity = 0;

    friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

struct EvaluationOptions {
    // One judge call per turn instead of one per transcript.
    bool per_turn_breakdown = false;
};

std::string build_breakdown_prompt(const Transcript& transcript);
std::string build_turn_breakdown_prompt(const Transcript& transcript, std::size_t turn);
std::string build_judge_prompt(const Transcript& transcript);

/// Expects exactly one "Turn N: NB" or "Turn N: B <category>" line per turn.
/// Returns an error message instead of annotations on any deviation.
struct BreakdownParse {
    std::vector<BreakdownAnnotation> annotations;
    std::optional<std::string> error;
};
BreakdownParse parse_breakdown_output(std::string_view text, std::size_t turn_count);

/// "coherence", "cooperativeness", "diversity" keys with ':' or '='. Values
/// outside 1-5 are an error, never clamped.
struct JudgeParse {
    std::optional<JudgeScores> scores;
    std::optional<std::string> error;
};
JudgeParse parse_judge_scores(std::string_view text);

/// One annotation per turn. A malformed answer gets one retry with a format
/// reminder; a second failure throws EvaluationError.
std::vector<BreakdownAnnotation> analyze_breakdowns(const Transcript& transcript, ModelClient& client,
                                                    const EvaluationOptions& options = {});

int count_breakdowns(std::span<const BreakdownAnnotation> annotations) noexcept;

/// Same retry and failure rule as analyze_breakdowns.
JudgeScores judge_transcript(const Transcript& transcript, ModelClient& client);

struct TranscriptEvaluation {
    std::string session_id;
    Condition condition = Condition::CurrentSelectsNext;
    std::vector<BreakdownAnnotation> annotations;
    JudgeScores scores;

    int breakdown_count() const noexcept { return count_breakdowns(annotations); }
};

inline constexpr std::string_view metric_breakdown_count = "breakdown_count";
inline constexpr std::string_view metric_coherence = "coherence";
inline constexpr std::string_view metric_cooperativeness = "cooperativeness";
inline constexpr std::string_view metric_diversity = "diversity";
std::span<const std::string_view> all_metrics() noexcept;

struct MetricSummary {
    std::vector<double> values;
    std::map<int, int> histogram;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;

    double iqr() const noexcept { return q3 - q1; }
};

/// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);
MetricSummary summarize_metric(std::vector<double> values);

struct ConditionSummary {
    Condition condition = Condition::CurrentSelectsNext;
    int evaluated = 0;
    int excluded = 0;
    std::map<std::string, MetricSummary, std::less<>> metrics;

    double evaluable_fraction() const noexcept;
};

/// Minimum share of a batch that must be evaluable for its statistics to be reported as valid.
inline constexpr double min_evaluable_fraction = 0.9;

/// Results whose condition differs are ignored. Requires at least one matching result.
ConditionSummary aggregate_condition(std::span<const TranscriptEvaluation> results, Condition condition,
                                     int excluded = 0);

struct AggregateReport {
    std::vector<ConditionSummary> conditions;
};

json aggregate_to_json(const AggregateReport& report);
AggregateReport aggregate_from_json(const json& j);
/// condition,metric,value,count rows, one per histogram bin.
std::string aggregate_to_csv(const AggregateReport& report);

} // namespace parley
