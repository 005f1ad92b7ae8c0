#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "rso/error.hpp"
#include "rso/metrics.hpp"
#include "rso/rng.hpp"

namespace rso {
namespace {

const PromptLibrary kPrompts = PromptLibrary::defaults();

// ---------------------------------------------------------------- PRS

TEST(PersuasivenessTest, FixtureValues) {
    EXPECT_EQ(persuasiveness({2, 4, 4}), 1.0);
    EXPECT_EQ(persuasiveness({2, 2, 4}), 0.0);
    EXPECT_EQ(persuasiveness({1, 3, 5}), 1.0 - 2.0 / 4.0);
    EXPECT_EQ(persuasiveness({3, 3, 3}), 1.0);  // nothing to persuade
}

TEST(PersuasivenessTest, ConstraintAndClamp) {
    EXPECT_THROW(IntentionTriple(1, 4, 3), PreconditionError);
    EXPECT_EQ(persuasiveness({3, 1, 4}), 0.0);  // intention fell: formula goes negative
    EXPECT_EQ(persuasiveness({4, 1, 2}), 1.0);  // i_pre above i_true: formula exceeds 1
    EXPECT_EQ(persuasiveness({5, 3, 3}), 1.0);
}

TEST(PersuasivenessTest, MonotoneInPost) {
    Rng rng(2);
    for (int k = 0; k < 2000; ++k) {
        const double pre = 1 + 4 * rng.uniform();
        const double truth = 1 + 4 * rng.uniform();
        double a = 1 + (truth - 1) * rng.uniform();
        double b = 1 + (truth - 1) * rng.uniform();
        if (a > b) std::swap(a, b);
        const double pa = persuasiveness({pre, a, truth});
        const double pb = persuasiveness({pre, b, truth});
        EXPECT_LE(pa, pb);
        EXPECT_GE(pa, 0.0);
        EXPECT_LE(pb, 1.0);
    }
}

// ---------------------------------------------------------------- Dist-2

TEST(Distinct2Test, FixtureValues) {
    EXPECT_EQ(distinct_2({"i like cats", "i like dogs"}), 0.75);
    EXPECT_EQ(distinct_2({"hello", "world", "ok"}), 0.0);
    EXPECT_EQ(distinct_2({}), 0.0);
    EXPECT_EQ(distinct_2({"a b c d"}), 1.0);
    // bigrams never span utterances, punctuation splits tokens, case folds
    EXPECT_EQ(distinct_2({"Great movie!", "great MOVIE"}), 0.5);
    EXPECT_EQ(distinct_2({"a", "b"}), 0.0);
}

TEST(Distinct2Test, PermutationInvariant) {
    std::vector<std::string> u = {"the cat sat", "on the mat", "the cat ran", "a b a b", "x"};
    const double base = distinct_2(u);
    std::sort(u.begin(), u.end());
    do {
        EXPECT_EQ(distinct_2(u), base);
    } while (std::next_permutation(u.begin(), u.end()));
}

// ---------------------------------------------------------------- recall

TEST(RecallTest, FixtureValues) {
    EXPECT_EQ(recall_at_k({"A", "B"}, "A", 1), 1);
    EXPECT_EQ(recall_at_k({"A", "B"}, "B", 1), 0);
    EXPECT_EQ(recall_at_k({"A", "B"}, "b", 5), 1);
    EXPECT_EQ(recall_at_k({}, "A", 5), 0);
    EXPECT_THROW(recall_at_k({"A"}, "A", 0), PreconditionError);
}

TEST(RecallTest, CorpusMeanMatchesHandAverage) {
    // 99 dialogues; hits at rank r = i % 7 (rank 6 means "not recommended")
    std::vector<EvalRecord> records;
    int hits1 = 0, hits5 = 0;
    for (int i = 0; i < 99; ++i) {
        EvalRecord r;
        r.gold_item = "Gold";
        const int rank = i % 7;
        for (int j = 0; j < 6; ++j) r.recommended_items.push_back(j == rank ? "Gold" : "Other " + std::to_string(j));
        hits1 += rank == 0;
        hits5 += rank < 5;
        records.push_back(r);
    }
    const auto rep = aggregate(records);
    EXPECT_EQ(*rep.recall_at_1, hits1 / 99.0);
    EXPECT_EQ(*rep.recall_at_5, hits5 / 99.0);
}

// ---------------------------------------------------------------- aggregate

EvalRecord rec(bool accepted, std::optional<std::string> gold = std::nullopt, std::vector<std::string> items = {}) {
    EvalRecord r;
    r.accepted = accepted;
    r.gold_item = std::move(gold);
    r.recommended_items = std::move(items);
    return r;
}

TEST(AggregateTest, Rates) {
    EXPECT_EQ(aggregate({rec(true), rec(true)}).conv_sr, 1.0);
    const auto half = aggregate({rec(true), rec(false), rec(true), rec(false)});
    EXPECT_EQ(half.conv_sr, 0.5);
    EXPECT_EQ(half.n, 4);
    EXPECT_FALSE(half.wi_mean);
    EXPECT_FALSE(half.recall_at_1);
    EXPECT_THROW(aggregate({}), PreconditionError);
}

TEST(AggregateTest, RecSrCountsRecordsWithoutGoldAsMisses) {
    const auto r = aggregate({rec(true, "Heat", {"Alien", "Heat"}), rec(false, "Heat", {"Alien"}), rec(true)});
    EXPECT_EQ(r.rec_sr, 1.0 / 3.0);
    EXPECT_EQ(*r.recall_at_1, 0.0);
    EXPECT_EQ(*r.recall_at_5, 0.5);
}

TEST(AggregateTest, MeansOverPresentValues) {
    auto a = rec(true);
    a.wi = 4.0;
    a.prs = 0.5;
    auto b = rec(false);
    b.wi = 2.0;
    b.cred = 3.0;
    const auto r = aggregate({a, b, rec(true)});
    EXPECT_EQ(*r.wi_mean, 3.0);
    EXPECT_EQ(*r.prs_mean, 0.5);
    EXPECT_EQ(*r.cred_mean, 3.0);
}

TEST(AggregateTest, PoolsSystemUtterancesForDist2) {
    auto a = rec(true);
    a.system_utterances = {"i like cats"};
    auto b = rec(true);
    b.system_utterances = {"i like dogs"};
    EXPECT_EQ(aggregate({a, b}).dist2, 0.75);
}

TEST(AggregateTest, ConcatenationIsWeightedMean) {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<EvalRecord> x, y;
        for (auto* part : {&x, &y}) {
            const auto n = 1 + rng.below(8);
            for (std::uint64_t i = 0; i < n; ++i) {
                auto r = rec(rng.below(2) == 1);
                if (rng.below(2)) {
                    r.gold_item = "G";
                    if (rng.below(2)) r.recommended_items = {"G"};
                }
                part->push_back(r);
            }
        }
        auto all = x;
        all.insert(all.end(), y.begin(), y.end());
        const auto rx = aggregate(x), ry = aggregate(y), ra = aggregate(all);
        EXPECT_NEAR(ra.conv_sr, (rx.conv_sr * rx.n + ry.conv_sr * ry.n) / ra.n, 1e-12);
        EXPECT_NEAR(ra.rec_sr, (rx.rec_sr * rx.n + ry.rec_sr * ry.n) / ra.n, 1e-12);
        for (double v : {ra.conv_sr, ra.rec_sr, ra.recall_at_1.value_or(0), ra.recall_at_5.value_or(0), ra.dist2}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

// ---------------------------------------------------------------- judges

TEST(JudgeMetricTest, ConstantMocks) {
    MockBackend five(mock::constant("5"));
    EXPECT_EQ(judge_watching_intention(five, kPrompts, "SYSTEM: hi", 10), 5.0);
    EXPECT_EQ(judge_watching_intention(five, kPrompts, "SYSTEM: hi", 10), 5.0);
    EXPECT_EQ(five.calls(), 20u);
}

TEST(JudgeMetricTest, CredibilityDropsOnContradiction) {
    // the judge sees the reference facts and the transcript; it scores low
    // when the transcript claims a genre the facts do not support
    MockBackend judge(mock::rules("transcript", {{"horror", "1"}}, "5"));
    const KnowledgeGraph kg({{"My Favorite Year", "genre", "comedy-drama"}});
    const auto facts = retrieve_facts(kg, {{"My Favorite Year", 1.0}}, 8);
    const double faithful = judge_credibility(judge, kPrompts, "SYSTEM: [[My Favorite Year]] is a comedy-drama.", facts, 3);
    const double invented = judge_credibility(judge, kPrompts, "SYSTEM: [[My Favorite Year]] is a horror film.", facts, 3);
    EXPECT_LT(invented, faithful);
    EXPECT_NE(judge.requests().back().messages.front().content.find("comedy-drama"), std::string::npos);
}

DialogueState conversation() {
    auto s = apply_user_turn(DialogueState::fresh("s"), "I want a comedy");
    s = apply_system_turn(s, StrategyId(9), "What did you watch lately?");
    s = apply_user_turn(s, "Nothing good");
    s = apply_system_turn(s, StrategyId(0), "You'd love [[Amelie]], it won awards.");
    s = apply_user_turn(s, "Sounds nice");
    return s;
}

TEST(IntentionTest, PrefixStopsBeforeFirstMention) {
    const auto s = conversation();
    EXPECT_EQ(pre_recommendation_prefix(s, "Amelie").history.size(), 3u);
    EXPECT_EQ(pre_recommendation_prefix(s, "Heat").history.size(), 3u);  // first exchange
    auto greet = apply_system_turn(DialogueState::fresh("g"), StrategyId(0), "Hi, try [[Heat]]");
    EXPECT_TRUE(pre_recommendation_prefix(greet, "Heat").history.empty());
}

TEST(IntentionTest, ComposesWithPersuasiveness) {
    MockBackend judge(mock::sequence({"2", "4", "4"}));
    const KnowledgeGraph kg({{"Amelie", "genre", "romantic comedy"}});
    const auto info = retrieve_facts(kg, {{"Amelie", 1.0}}, 100);
    const auto t = measure_intentions(judge, kPrompts, conversation(), "Amelie", info, 1);
    EXPECT_EQ(t, IntentionTriple(2, 4, 4));
    EXPECT_EQ(persuasiveness(t), 1.0);
    const auto prompts = judge.requests();
    ASSERT_EQ(prompts.size(), 3u);
    EXPECT_EQ(prompts[0].inputs.at("transcript").find("Amelie"), std::string::npos);
    EXPECT_NE(prompts[1].inputs.at("transcript").find("Amelie"), std::string::npos);
    EXPECT_NE(prompts[2].inputs.at("facts").find("romantic comedy"), std::string::npos);
}

TEST(IntentionTest, TrueIntentionRaisedToPost) {
    MockBackend judge(mock::sequence({"2", "4", "3"}));
    const KnowledgeGraph kg({{"Amelie", "genre", "romantic comedy"}});
    const auto t = measure_intentions(judge, kPrompts, conversation(), "Amelie",
                                      retrieve_facts(kg, {{"Amelie", 1.0}}, 100), 1);
    EXPECT_EQ(t.i_true(), 4.0);
    EXPECT_THROW(measure_intentions(judge, kPrompts, conversation(), "Amelie", FactBundle{}, 1),
                 PreconditionError);
}

// ---------------------------------------------------------------- items

TEST(ItemExtractionTest, Markers) {
    EXPECT_EQ(marked_items("Try [[Heat]] or [[ Alien ]], not [[]] or [[broken"),
              (std::vector<std::string>{"Heat", "Alien"}));
}

TEST(ItemExtractionTest, MostRecentFirst) {
    auto s = apply_user_turn(DialogueState::fresh("s"), "hi [[Fake]]");  // user markers are ignored
    s = apply_system_turn(s, StrategyId(0), "[[Heat]] and [[Alien]]");
    s = apply_user_turn(s, "hm");
    s = apply_system_turn(s, StrategyId(0), "Really, [[heat]] is great");
    EXPECT_EQ(recommended_items(s), (std::vector<std::string>{"heat", "Alien"}));
}

TEST(ItemExtractionTest, FallsBackToIndexNames) {
    const HashingEmbedder emb(32);
    const auto index = EntityIndex::build(testing::tiny_profiles(), emb);
    auto s = apply_system_turn(DialogueState::fresh("s"), StrategyId(0), "Alien is scary; Heatwave is not a title, Heat is");
    EXPECT_EQ(recommended_items(s, &index), (std::vector<std::string>{"Heat", "Alien"}));
    EXPECT_TRUE(recommended_items(s).empty());
}

}  // namespace
}  // namespace rso
