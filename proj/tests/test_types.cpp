// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "parley/error.hpp"
#include "parley/rng.hpp"
#include "parley/types.hpp"

using namespace parley;

TEST(Condition, NamesRoundTrip) {
    for (auto c : {Condition::Equal, Condition::SelfSelect, Condition::CurrentSelectsNext})
        EXPECT_EQ(parse_condition(to_string(c)), c);
    EXPECT_EQ(to_string(Condition::CurrentSelectsNext), "CSSN_OR_SS");
    EXPECT_EQ(parse_condition("cssn-or-ss"), Condition::CurrentSelectsNext);
    EXPECT_EQ(parse_condition("ss"), Condition::SelfSelect);
    EXPECT_THROW(parse_condition("RANDOM"), ConfigError);
}

TEST(PairType, ParsesLooseSpellings) {
    EXPECT_EQ(parse_pair_type("wh_question"), PairType::WhQuestion);
    EXPECT_EQ(parse_pair_type("WH-Question"), PairType::WhQuestion);
    EXPECT_EQ(parse_pair_type("yes/no question"), PairType::YesNoQuestion);
    EXPECT_EQ(parse_pair_type("Invitation"), PairType::Invitation);
    EXPECT_EQ(parse_pair_type("none"), PairType::None);
    EXPECT_EQ(parse_pair_type("command"), std::nullopt);
}

TEST(SelectionReason, NamesRoundTrip) {
    using R = SelectionReason;
    for (auto r : {R::Designated, R::HighestBid, R::TieBreak, R::SpeakerContinues, R::FirstTurnRandom, R::EqualSchedule})
        EXPECT_EQ(parse_selection_reason(to_string(r)), r);
    EXPECT_EQ(parse_selection_reason("Whatever"), std::nullopt);
}

TEST(Json, DetectionRoundTrip) {
    Detection d;
    d.is_first_pair_part = true;
    d.pair_type = PairType::Request;
    d.addressee_name = "Hana Morrow";
    d.expected_second_pair_part = "(acceptance/rejection)";
    d.raw_addressee = "hana morrow";
    json j = d;
    EXPECT_EQ(j.get<Detection>(), d);
    json none = Detection::none();
    EXPECT_EQ(none.get<Detection>(), Detection::none());
}

TEST(Json, ThinkOutputRejectsUnknownAction) {
    json j{{"thought", "x"}, {"action", "shout"}, {"importance", 3}};
    EXPECT_THROW(j.get<ThinkOutput>(), ParseError);
    j["action"] = "speak";
    EXPECT_EQ(j.get<ThinkOutput>(), (ThinkOutput{"x", Action::Speak, 3}));
}

TEST(Rng, MatchesStandardSequence) {
    // The 10000th output of a default-seeded mt19937_64 is fixed by the C++ standard.
    Rng rng(5489);
    std::uint64_t x = 0;
    for (int i = 0; i < 10000; ++i)
        x = rng.next();
    EXPECT_EQ(x, 9981545732273789042ULL);
    EXPECT_EQ(rng.draws(), 10000u);
    EXPECT_EQ(Rng(1).next(), 2469588189546311528ULL);
}

TEST(Rng, UniformIndexInRangeAndRoughlyUniform) {
    Rng rng(7);
    std::vector<int> counts(5);
    for (int i = 0; i < 50000; ++i) {
        const auto k = rng.uniform_index(5);
        ASSERT_LT(k, 5u);
        ++counts[k];
    }
    for (int c : counts)
        EXPECT_NEAR(c, 10000, 500);
    EXPECT_EQ(rng.uniform_index(1), 0u);
}

TEST(Rng, ShuffleIsAPermutationAndSeedDeterministic) {
    std::vector<int> a(20), b(20);
    std::iota(a.begin(), a.end(), 0);
    b = a;
    Rng r1(11), r2(11);
    r1.shuffle(std::span<int>(a));
    r2.shuffle(std::span<int>(b));
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expected(20);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(sorted, expected);
}

TEST(Errors, ParseErrorCarriesLine) {
    const ParseError e("bad token", 7);
    EXPECT_EQ(e.line(), 7u);
    EXPECT_STREQ(e.what(), "line 7: bad token");
    const ValidationError v({"/a: missing", "/b: missing"});
    EXPECT_EQ(v.violations().size(), 2u);
    EXPECT_NE(std::string(v.what()).find("/b: missing"), std::string::npos);
}
