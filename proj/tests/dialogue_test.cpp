#include <gtest/gtest.h>

#include <numeric>

#include "rso/dialogue.hpp"
#include "rso/error.hpp"

namespace rso {
namespace {

const StrategyId kCredibility(0);
const StrategyId kOfferHelp(5);

TEST(DialogueTest, FirstSystemTurnBookkeeping) {
    const auto s0 = DialogueState::fresh("s");
    const auto s1 = apply_system_turn(s0, kCredibility, "Hi! Looking for a movie?");
    EXPECT_EQ(s1.history.size(), 1u);
    EXPECT_EQ(s1.strategy_counts[0], 1);
    EXPECT_EQ(s1.turn, 1);
    EXPECT_EQ(s1.last_strategy, kCredibility);
    // input untouched
    EXPECT_TRUE(s0.history.empty());
    EXPECT_EQ(s0.strategy_counts[0], 0);
}

TEST(DialogueTest, SystemTurnTwiceWithoutReplyIsRejected) {
    const auto s1 = apply_system_turn(DialogueState::fresh("s"), kCredibility, "hello");
    EXPECT_THROW(apply_system_turn(s1, kCredibility, "again"), PreconditionError);
}

TEST(DialogueTest, EmptyTextIsRejected) {
    const auto s0 = DialogueState::fresh("s");
    EXPECT_THROW(apply_system_turn(s0, kCredibility, "   "), PreconditionError);
    const auto s1 = apply_system_turn(s0, kCredibility, "hello");
    EXPECT_THROW(apply_user_turn(s1, "\n"), PreconditionError);
}

TEST(DialogueTest, UserReplyAdvancesTurn) {
    const auto s1 = apply_system_turn(DialogueState::fresh("s"), kCredibility, "hello");
    const auto s2 = apply_user_turn(s1, "sure, a comedy");
    EXPECT_EQ(s2.turn, s1.turn + 1);
    EXPECT_THROW(apply_user_turn(s2, "and another"), PreconditionError);
}

TEST(DialogueTest, OpeningUserMessageDoesNotAdvanceTurn) {
    const auto s = apply_user_turn(DialogueState::fresh("s"), "I want a comedy");
    EXPECT_EQ(s.turn, 1);
    EXPECT_TRUE(s.awaiting_system());
    EXPECT_EQ(s.system_turns(), 0);
}

TEST(DialogueTest, CountsMatchRecountOverHistory) {
    auto s = DialogueState::fresh("s");
    const StrategyId seq[] = {StrategyId(3), StrategyId(9), StrategyId(3)};
    for (auto id : seq) {
        s = apply_system_turn(s, id, "system line");
        s = apply_user_turn(s, "user line");
    }
    s = apply_system_turn(s, kOfferHelp, "text");
    const int total = std::accumulate(s.strategy_counts.begin(), s.strategy_counts.end(), 0);
    EXPECT_EQ(total, 4);
    EXPECT_EQ(total, count_speaker(s, Speaker::System));
    EXPECT_EQ(s.strategy_counts[3], 2);
}

TEST(DialogueTest, TenRoundTripsEndAtTurnEleven) {
    auto s = DialogueState::fresh("s");
    int expected_turn = 1;
    for (int i = 0; i < 10; ++i) {
        s = apply_system_turn(s, StrategyId(i % kNumStrategies), "sys " + std::to_string(i));
        s = apply_user_turn(s, "usr " + std::to_string(i));
        ++expected_turn;
        EXPECT_EQ(s.turn, 1 + s.system_turns());
    }
    EXPECT_EQ(s.turn, expected_turn);
    EXPECT_EQ(s.turn, 11);
}

TEST(DialogueTest, TransitionsArePure) {
    const auto s0 = apply_user_turn(DialogueState::fresh("s"), "hi");
    const auto a = apply_system_turn(s0, kCredibility, "x");
    const auto b = apply_system_turn(s0, kCredibility, "x");
    EXPECT_EQ(a, b);
}

TEST(DialogueTest, TranscriptRendering) {
    EXPECT_EQ(render_transcript(DialogueState::fresh("s")), "");
    EXPECT_EQ(render_transcript(DialogueState::fresh("s", "Persona: film buff")),
              "Persona: film buff");

    auto s = apply_system_turn(DialogueState::fresh("s"), kCredibility, "Hello there");
    s = apply_user_turn(s, "hi");
    EXPECT_EQ(render_transcript(s), "SYSTEM: Hello there\nUSER: hi");
    EXPECT_EQ(render_transcript(s), render_transcript(s));

    s.pinned_context = "Scenario";
    EXPECT_EQ(render_transcript(s), "Scenario\nSYSTEM: Hello there\nUSER: hi");
}

TEST(TrajectoryTest, ValidateEnforcesInvariants) {
    Trajectory t;
    EXPECT_THROW(t.validate(10), PreconditionError);
    t.records.push_back(TurnRecord{0, kCredibility, -0.5, "a", 0.25, false});
    t.records.push_back(TurnRecord{0, kCredibility, -0.5, "b", 1.0, true});
    t.outcome = Outcome::accepted_at(2);
    EXPECT_NO_THROW(t.validate(10));
    EXPECT_THROW(t.validate(1), PreconditionError);

    auto bad = t;
    bad.records[0].terminated = true;
    EXPECT_THROW(bad.validate(10), PreconditionError);
    bad = t;
    bad.records[0].reward = 1.5;
    EXPECT_THROW(bad.validate(10), PreconditionError);
    bad = t;
    bad.records[0].strategy_logprob = 0.1;
    EXPECT_THROW(bad.validate(10), PreconditionError);
}

}  // namespace
}  // namespace rso
