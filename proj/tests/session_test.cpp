#include <gtest/gtest.h>

#include <thread>

#include "fixtures.hpp"
#include "rso/error.hpp"
#include "rso/session.hpp"
#include "rso/text.hpp"

namespace rso {
namespace {

using testing::chatty_user;
using testing::mock_session;

const PolicyParams kZero;

Episode run(const SessionConfig& c, std::uint64_t seed = 5) {
    auto user = chatty_user();
    return run_session(c, kZero, *user, seed);
}

// ---------------------------------------------------------------- run_turn

TEST(RunTurnTest, DeterministicUnderFixedSeed) {
    auto log = std::make_shared<CallLog>();
    const auto c = mock_session(log, mock::random_score(1, 5));
    const auto a = run(c);
    const auto b = run(c);
    EXPECT_EQ(a.trajectory, b.trajectory);
    EXPECT_EQ(a.final_state, b.final_state);
}

TEST(RunTurnTest, ConstantFiveStopsAfterTurnOne) {
    const auto c = mock_session(nullptr, mock::constant("5"));
    const auto state = apply_user_turn(DialogueState::fresh("s"), "hello");
    auto user = chatty_user();
    Rng rng(1);
    const auto r = run_turn(c, kZero, state, *user, rng);
    EXPECT_TRUE(r.trace.record.terminated);
    EXPECT_EQ(r.trace.record.reward, 1.0);
    EXPECT_EQ(r.next_state.turn, 2);
    EXPECT_EQ(r.next_state.last_reward, 1.0);
}

TEST(RunTurnTest, ExpertInvocationOrder) {
    auto log = std::make_shared<CallLog>();
    auto c = mock_session(log, mock::constant("2"));
    c.reward_samples = 2;
    c.turn_cap = 2;
    c.observer = [log](Phase p, int) { log->record("phase:" + std::string(phase_name(p))); };
    auto user_backend = std::make_shared<MockBackend>(mock::constant("Tell me more."), 0, log);
    SimulatedUser user(user_backend, c.prompts, "likes comedies", std::string("Amelie"), std::string("Hi there"));
    run_session(c, kZero, user, 3);

    const std::vector<std::string> one_turn = {
        "phase:plan", "phase:preference", "preference", "phase:retrieve", "phase:act", "actor",
        "phase:user", "user",             "phase:reward", "rewarder",     "rewarder", "phase:stop-check",
    };
    std::vector<std::string> expected = one_turn;
    expected.insert(expected.end(), one_turn.begin(), one_turn.end());
    EXPECT_EQ(log->events(), expected);
}

TEST(RunTurnTest, PreferenceSeesStateBeforeTheSystemUtterance) {
    auto c = mock_session(nullptr, mock::constant("2"));
    c.turn_cap = 3;
    auto pref = std::make_shared<MockBackend>(mock::keyword_preference({"comedy"}));
    c.experts.preference = pref;
    auto user = chatty_user();
    const auto ep = run_session(c, kZero, *user, 9);
    const auto requests = pref->requests();
    ASSERT_EQ(requests.size(), 3u);
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto lines = text::split(requests[i].inputs.at("transcript"), '\n');
        EXPECT_EQ(lines.back().rfind("USER:", 0), 0u) << i;
        EXPECT_EQ(lines.size(), 2 * i + 1);  // opener, then one exchange per earlier turn
    }
}

TEST(RunTurnTest, RetrievedFactsReachTheActor) {
    auto c = mock_session(nullptr, mock::constant("5"));
    auto user = chatty_user();
    const auto ep = run_session(c, kZero, *user, 1);
    const auto& t = ep.turns.front();
    ASSERT_FALSE(t.facts.entities.empty());
    EXPECT_EQ(static_cast<int>(t.facts.entities.size()), c.top_k);
    EXPECT_NE(t.record.action_text.find("[[" + t.facts.entities.front().name + "]]"), std::string::npos);
}

TEST(RunTurnTest, GreetingTurnSkipsPreferenceAndRetrieval) {
    auto log = std::make_shared<CallLog>();
    auto c = mock_session(log, mock::constant("2"));
    c.turn_cap = 1;
    ScriptedUser user({"I want something scary"});  // no opener: the system speaks first
    const auto ep = run_session(c, kZero, user, 2);
    EXPECT_EQ(log->events(), (std::vector<std::string>{"actor", "rewarder", "rewarder", "rewarder", "rewarder",
                                                       "rewarder", "rewarder", "rewarder", "rewarder", "rewarder",
                                                       "rewarder"}));
    EXPECT_FALSE(ep.turns.front().preference);
    EXPECT_TRUE(ep.turns.front().facts.empty());
}

TEST(RunTurnTest, ExpertFailureNamesExpertAndTurn) {
    auto c = mock_session(nullptr, mock::constant("2"));
    c.experts.actor = std::make_shared<MockBackend>(mock::sequence({"[x] fine", "   ", "  "}));
    auto user = chatty_user();
    try {
        run_session(c, kZero, *user, 1);
        FAIL();
    } catch (const ExpertError& e) {
        EXPECT_EQ(e.expert(), "actor");
        EXPECT_EQ(e.turn(), 2);
    }
}

TEST(RunTurnTest, RejectsStateWaitingForUser) {
    const auto c = mock_session(nullptr, mock::constant("2"));
    auto s = apply_system_turn(DialogueState::fresh("s"), StrategyId(0), "hi");
    auto user = chatty_user();
    Rng rng(1);
    EXPECT_THROW(run_turn(c, kZero, s, *user, rng), PreconditionError);
}

// ---------------------------------------------------------------- run_session

TEST(RunSessionTest, LowScoresRunToTheCap) {
    const auto ep = run(mock_session(nullptr, mock::constant("1")));
    EXPECT_EQ(ep.trajectory.records.size(), 10u);
    EXPECT_EQ(ep.trajectory.outcome, Outcome::turn_cap());
    EXPECT_FALSE(ep.abandoned);
    for (const auto& r : ep.trajectory.records) EXPECT_EQ(r.reward, 0.0);
}

TEST(RunSessionTest, ConstantFiveAcceptsAtTurnOne) {
    const auto ep = run(mock_session(nullptr, mock::constant("5")));
    EXPECT_EQ(ep.trajectory.records.size(), 1u);
    EXPECT_EQ(ep.trajectory.outcome, Outcome::accepted_at(1));
}

TEST(RunSessionTest, ScriptedJudgeTrace) {
    const std::vector<double> raw = {2, 2, 5};
    auto c = mock_session(nullptr, mock::sequence({"2", "2", "5"}));
    c.reward_samples = 1;
    const auto ep = run(c);
    // threshold trace: first turn whose normalized score exceeds tau
    int expected = 0;
    for (std::size_t i = 0; i < raw.size() && expected == 0; ++i) {
        if ((raw[i] - 1.0) / 4.0 > c.tau) expected = static_cast<int>(i) + 1;
    }
    EXPECT_EQ(ep.trajectory.outcome, Outcome::accepted_at(expected));
    ASSERT_EQ(ep.trajectory.records.size(), 3u);
    EXPECT_EQ(ep.trajectory.records[0].reward, 0.25);
    EXPECT_EQ(ep.trajectory.records[2].reward, 1.0);
}

TEST(RunSessionTest, ScoreAtThresholdDoesNotStop) {
    auto c = mock_session(nullptr, mock::constant("4"));
    c.tau = 0.75;
    c.turn_cap = 4;
    const auto ep = run(c);
    EXPECT_EQ(ep.trajectory.records.size(), 4u);
    EXPECT_FALSE(ep.trajectory.outcome.accepted());
}

TEST(RunSessionTest, ExhaustedScriptEndsAtCapOutcome) {
    auto c = mock_session(nullptr, mock::constant("1"));
    ScriptedUser user({"one", "two"}, "hello");
    const auto ep = run_session(c, kZero, user, 1);
    EXPECT_EQ(ep.trajectory.records.size(), 2u);
    EXPECT_EQ(ep.trajectory.outcome, Outcome::turn_cap());
    EXPECT_TRUE(ep.abandoned);
}

TEST(RunSessionTest, NeverExceedsCap) {
    for (int cap = 1; cap <= 12; ++cap) {
        auto c = mock_session(nullptr, mock::random_score(1, 4), static_cast<std::uint64_t>(cap));
        c.turn_cap = cap;
        const auto ep = run(c, static_cast<std::uint64_t>(cap));
        EXPECT_LE(static_cast<int>(ep.trajectory.records.size()), cap);
    }
}

TEST(RunSessionTest, GreedyPicksArgmax) {
    auto c = mock_session(nullptr, mock::constant("1"));
    c.greedy = true;
    c.turn_cap = 3;
    PolicyParams p;
    p.weight(7, layout::kBias) = 3.0;
    auto user = chatty_user();
    const auto ep = run_session(c, p, *user, 4);
    for (const auto& r : ep.trajectory.records) EXPECT_EQ(r.strategy, StrategyId(7));
}

TEST(RunSessionTest, ConfigValidationNamesField) {
    auto c = mock_session(nullptr, mock::constant("1"));
    c.turn_cap = 0;
    try {
        run(c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "session.turn_cap");
    }
    c = mock_session(nullptr, mock::constant("1"));
    c.gamma = 1.5;
    EXPECT_THROW(run(c), ConfigError);
    c = mock_session(nullptr, mock::constant("1"));
    c.experts.actor = nullptr;
    EXPECT_THROW(run(c), ConfigError);
}

// ---------------------------------------------------------------- live user

TEST(LiveUserTest, DeliversQueuedRepliesAndTimesOut) {
    std::vector<std::string> seen;
    LiveUser user(std::chrono::milliseconds(20), [&](const DialogueState& s) {
        seen.push_back(*s.last_system_text());
    });
    auto c = mock_session(nullptr, mock::constant("1"));
    user.push("hi, something scary please");
    const auto ep = run_session(c, kZero, user, 1);
    ASSERT_EQ(ep.trajectory.records.size(), 2u);  // second turn times out
    EXPECT_TRUE(ep.abandoned);
    EXPECT_EQ(ep.trajectory.outcome, Outcome::turn_cap());
    EXPECT_EQ(ep.trajectory.records[1].reward, 0.0);
    EXPECT_EQ(seen.size(), 2u);
}

TEST(LiveUserTest, CloseWakesWaiter) {
    LiveUser user(std::chrono::minutes(5));
    std::thread closer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        user.close();
    });
    const auto s = apply_system_turn(DialogueState::fresh("s"), StrategyId(0), "hello");
    EXPECT_FALSE(user.reply(s));
    closer.join();
    EXPECT_FALSE(user.push("late"));
}

// ---------------------------------------------------------------- training

TEST(TrainingEpochTest, ReproducibleGivenSeed) {
    auto make = [] {
        auto c = mock_session(nullptr, mock::random_score(1, 5));
        c.users = [](std::uint64_t) { return chatty_user(); };
        c.reward_samples = 3;
        return c;
    };
    TrainingOptions o;
    o.episodes = 1;
    const auto a = run_training_epoch(make(), kZero, o, 0);
    const auto b = run_training_epoch(make(), kZero, o, 0);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.stats.mean_return, b.stats.mean_return);
    EXPECT_EQ(a.stats.histogram, b.stats.histogram);
}

TEST(TrainingEpochTest, ParallelCollectionMatchesSequential) {
    const BanditOptions bo{StrategyId(3), 10, 0.5, 0.8, 1, 8};
    TrainingOptions o;
    o.episodes = 40;
    o.alpha = 0.01;
    const auto seq = run_training_epoch(make_bandit_config(bo), kZero, o, 2);
    o.workers = 4;
    const auto par = run_training_epoch(make_bandit_config(bo), kZero, o, 2);
    EXPECT_EQ(seq.params, par.params);
    EXPECT_EQ(seq.stats.strategy_counts, par.stats.strategy_counts);
}

TEST(TrainingEpochTest, BatchesIncludeRemainder) {
    const BanditOptions bo{StrategyId(0), 10, 0.5, 0.8, 1, 1};
    TrainingOptions o;
    o.episodes = 35;
    o.alpha = 0.01;
    const auto r = run_training_epoch(make_bandit_config(bo), kZero, o, 0);
    EXPECT_EQ(r.stats.updates.size(), 3u);  // 16 + 16 + 3
    EXPECT_EQ(r.stats.episodes, 35);
    EXPECT_EQ(r.params.optimizer().step, 3);
}

TEST(TrainingEpochTest, AllFailuresIsAnError) {
    auto c = mock_session(nullptr, mock::constant("no score"));
    c.users = [](std::uint64_t) { return chatty_user(); };
    TrainingOptions o;
    o.episodes = 3;
    EXPECT_THROW(run_training_epoch(c, kZero, o, 0), Error);
}

TEST(TrainingEpochTest, FailedEpisodesAreSkipped) {
    auto c = mock_session(nullptr, mock::constant("3"));
    c.turn_cap = 2;
    c.users = [](std::uint64_t seed) -> std::unique_ptr<UserAgent> {
        if (seed % 2 == 0) throw ExpertError("user", 0, "down");
        return chatty_user();
    };
    TrainingOptions o;
    o.episodes = 20;
    const auto r = run_training_epoch(c, kZero, o, 0);
    EXPECT_GT(r.stats.failed, 0);
    EXPECT_EQ(r.stats.failed + r.stats.episodes, 20);
}

TEST(TrainingEpochTest, BanditAcceptanceRateNonDecreasing) {
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        BanditOptions bo;
        bo.seed = seed;
        const auto c = make_bandit_config(bo);
        TrainingOptions o;
        o.alpha = 0.01;
        o.mean_baseline = true;
        PolicyParams p;
        std::vector<double> rates;
        for (int e = 0; e < 10; ++e) {
            auto r = run_training_epoch(c, p, o, e);
            p = std::move(r.params);
            rates.push_back(r.stats.acceptance_rate);
        }
        good += std::is_sorted(rates.begin(), rates.end()) ? 1 : 0;
    }
    EXPECT_GE(good, 4);
}

TEST(TrainingEpochTest, EntropyBonusKeepsPolicyBroader) {
    double h0 = 0.0, h1 = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (double beta : {0.0, 0.1}) {
            BanditOptions bo;
            bo.seed = seed;
            const auto c = make_bandit_config(bo);
            TrainingOptions o;
            o.alpha = 0.01;
            o.beta = beta;
            o.mean_baseline = true;
            PolicyParams p;
            EpochStats last;
            for (int e = 0; e < 10; ++e) {
                auto r = run_training_epoch(c, p, o, e);
                p = std::move(r.params);
                last = r.stats;
            }
            (beta == 0.0 ? h0 : h1) += last.mean_entropy;
        }
    }
    EXPECT_GT(h1, h0);
}

// ---------------------------------------------------------------- SFT

TEST(SftTest, SinglePairOverfits) {
    const SftPair pair{apply_user_turn(DialogueState::fresh("s"), "anything good?"), StrategyId(9)};
    SftOptions o;
    o.epochs = 100;
    o.lr = 0.05;
    const auto r = run_sft(kZero, {pair}, FeatureExtractor{}, o);
    EXPECT_EQ(r.epochs.size(), 100u);
    EXPECT_EQ(r.epochs.back().accuracy, 1.0);
    const auto dist = policy_distribution(r.params, extract_features(pair.state, 10));
    EXPECT_EQ(argmax_strategy(dist), StrategyId(9));
    EXPECT_LT(r.epochs.back().mean_loss, r.epochs.front().mean_loss);
}

TEST(SftTest, BanditCorpusLossFallsAndSeedReproduces) {
    const BanditOptions bo;
    const auto corpus = bandit_sft_corpus(bo, 48);
    SftOptions o;
    o.epochs = 5;
    o.lr = 0.01;
    o.seed = 3;
    const auto a = run_sft(kZero, corpus, FeatureExtractor{}, o);
    const auto b = run_sft(kZero, corpus, FeatureExtractor{}, o);
    EXPECT_EQ(a.params, b.params);
    for (std::size_t i = 1; i < a.epochs.size(); ++i) EXPECT_LT(a.epochs[i].mean_loss, a.epochs[i - 1].mean_loss);
}

TEST(SftTest, Preconditions) {
    EXPECT_THROW(run_sft(kZero, {}, FeatureExtractor{}, {}), PreconditionError);
    const SftPair waiting{apply_system_turn(DialogueState::fresh("s"), StrategyId(0), "hi"), StrategyId(1)};
    EXPECT_THROW(run_sft(kZero, {waiting}, FeatureExtractor{}, {}), PreconditionError);
    const PolicyParams small(16, "other");
    const SftPair ok{apply_user_turn(DialogueState::fresh("s"), "hey"), StrategyId(1)};
    EXPECT_THROW(run_sft(small, {ok}, FeatureExtractor{}, {}), ConfigError);
}

// ---------------------------------------------------------------- histogram

Trajectory traj(std::vector<int> strategies) {
    Trajectory t;
    for (int s : strategies) t.records.push_back({0, StrategyId(s), -1.0, "x", 0.0, false});
    return t;
}

TEST(HistogramTest, SingleTurnSingleBucket) {
    const auto h = strategy_histogram({traj({4})}, 1);
    for (int s = 0; s < kNumStrategies; ++s) EXPECT_EQ(h[s][0], s == 4 ? 1.0 : 0.0);
}

TEST(HistogramTest, HandTabulated) {
    // buckets = 2
    // [0,1,2,3]: t=1,2 -> bucket 0 ; t=3,4 -> bucket 1
    // [5,5]: t=1 -> 0 ; t=2 -> 1
    // [1,1,0]: t=1 -> 0 (0/3*2=0), t=2 -> 0 (1/3*2=0.67), t=3 -> 1 (2/3*2=1.33)
    // bucket 0: {0,1,5,1,1} -> 0:1/5 1:3/5 5:1/5
    // bucket 1: {2,3,5,0}   -> 0:1/4 2:1/4 3:1/4 5:1/4
    const auto h = strategy_histogram({traj({0, 1, 2, 3}), traj({5, 5}), traj({1, 1, 0})}, 2);
    std::vector<std::vector<double>> expected(kNumStrategies, std::vector<double>(2, 0.0));
    expected[0] = {0.2, 0.25};
    expected[1] = {0.6, 0.0};
    expected[2] = {0.0, 0.25};
    expected[3] = {0.0, 0.25};
    expected[5] = {0.2, 0.25};
    EXPECT_EQ(h, expected);
}

TEST(HistogramTest, ColumnsSumToOneOrZero) {
    Rng rng(4);
    std::vector<Trajectory> ts;
    for (int i = 0; i < 30; ++i) {
        std::vector<int> s(1 + rng.below(10));
        for (auto& x : s) x = static_cast<int>(rng.below(kNumStrategies));
        ts.push_back(traj(s));
    }
    for (int buckets : {1, 3, 7, 20}) {
        const auto h = strategy_histogram(ts, buckets);
        for (int b = 0; b < buckets; ++b) {
            double sum = 0.0;
            for (int s = 0; s < kNumStrategies; ++s) sum += h[s][b];
            EXPECT_TRUE(std::abs(sum - 1.0) < 1e-12 || sum == 0.0) << buckets << " " << b;
        }
    }
    EXPECT_THROW(strategy_histogram(ts, 0), PreconditionError);
}

}  // namespace
}  // namespace rso
