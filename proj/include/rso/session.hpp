#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rso/backend.hpp"
#include "rso/dialogue.hpp"
#include "rso/experts.hpp"
#include "rso/features.hpp"
#include "rso/knowledge.hpp"
#include "rso/policy.hpp"
#include "rso/prompts.hpp"
#include "rso/rng.hpp"
#include "rso/strategy.hpp"

namespace rso {

/// Steps of one turn, in execution order.
enum class Phase { Plan, Preference, Retrieve, Act, User, Reward, StopCheck };

std::string_view phase_name(Phase phase);

/// Called when a phase starts. Phases that do not run (no user utterance yet,
/// user gone) are not reported.
using PhaseObserver = std::function<void(Phase, int turn)>;

// ---------------------------------------------------------------- users

class UserAgent {
public:
    virtual ~UserAgent() = default;

    /// Opening message when the user speaks first; nullopt lets the system open.
    virtual std::optional<std::string> opening() = 0;

    /// Reply to the system message that ends `state`. nullopt means the user
    /// left (script exhausted, timeout, closed channel).
    virtual std::optional<std::string> reply(const DialogueState& state) = 0;

    /// False once the agent knows it cannot answer another system turn.
    virtual bool can_continue() const { return true; }
};

/// Replays fixed utterances.
class ScriptedUser final : public UserAgent {
public:
    explicit ScriptedUser(std::vector<std::string> replies, std::optional<std::string> opener = std::nullopt);

    std::optional<std::string> opening() override { return opener_; }
    std::optional<std::string> reply(const DialogueState& state) override;
    bool can_continue() const override { return next_ < replies_.size(); }

private:
    std::vector<std::string> replies_;
    std::optional<std::string> opener_;
    std::size_t next_ = 0;
};

/// LLM-played user with a persona and an optional target item.
class SimulatedUser final : public UserAgent {
public:
    SimulatedUser(BackendPtr backend, std::shared_ptr<const PromptLibrary> prompts, std::string persona,
                  std::optional<std::string> target_item = std::nullopt,
                  std::optional<std::string> opener = std::nullopt);

    std::optional<std::string> opening() override { return opener_; }
    std::optional<std::string> reply(const DialogueState& state) override;

private:
    BackendPtr backend_;
    std::shared_ptr<const PromptLibrary> prompts_;
    std::string persona_;
    std::optional<std::string> target_item_;
    std::optional<std::string> opener_;
};

/// A human on the other end of an inbound message queue. The system opens.
class LiveUser final : public UserAgent {
public:
    using SystemMessageFn = std::function<void(const DialogueState&)>;

    explicit LiveUser(std::chrono::milliseconds reply_timeout = std::chrono::minutes(15),
                      SystemMessageFn on_system_message = nullptr);

    std::optional<std::string> opening() override { return std::nullopt; }
    /// Publishes the system message, then blocks for the next inbound one.
    std::optional<std::string> reply(const DialogueState& state) override;

    /// Returns false when the agent is closed.
    bool push(std::string text);
    void close();
    bool closed() const;

private:
    std::chrono::milliseconds timeout_;
    SystemMessageFn on_system_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> inbox_;
    bool closed_ = false;
};

using UserFactory = std::function<std::unique_ptr<UserAgent>(std::uint64_t episode_seed)>;

// ---------------------------------------------------------------- config

struct TurnTrace;

struct ExpertSet {
    BackendPtr preference;
    BackendPtr actor;
    BackendPtr rewarder;
};

struct SessionConfig {
    int turn_cap = 10;
    double gamma = 0.99;
    double tau = 0.8;
    int reward_samples = 10;
    int top_k = 5;
    int per_entity_cap = 8;
    QueryMode query_mode = QueryMode::LastUserUtterance;
    std::size_t reply_char_limit = 600;
    std::uint64_t rng_seed = 0;
    /// Pick the most probable strategy instead of sampling.
    bool greedy = false;

    ExpertSet experts;
    UserFactory users;
    std::shared_ptr<const PromptLibrary> prompts;
    std::shared_ptr<const StrategyCatalog> catalog;
    /// Retrieval is skipped when any of these three is missing.
    std::shared_ptr<const KnowledgeGraph> graph;
    std::shared_ptr<const EntityIndex> index;
    std::shared_ptr<const TextEmbedder> embedder;
    FeatureExtractor features;
    std::optional<std::string> pinned_context;
    PhaseObserver observer;
    /// Called by run_session after every completed turn with the new state.
    std::function<void(const TurnTrace&, const DialogueState&)> on_turn;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

// ---------------------------------------------------------------- one turn

struct TurnTrace {
    TurnRecord record;
    int turn = 0;
    double entropy = 0.0;
    std::optional<PreferenceSummary> preference;
    FactBundle facts;
    std::optional<RewardSignal> reward;
    std::optional<std::string> user_reply;
};

struct TurnResult {
    TurnTrace trace;
    FeatureVector features;
    DialogueState next_state;
};

/// One pass of the turn loop: plan, infer preference, retrieve, act, user
/// reply, reward, stop check. When the user leaves, the reward phases are
/// skipped and the record carries reward 0.
TurnResult run_turn(const SessionConfig& config, const PolicyParams& params, const DialogueState& state,
                    UserAgent& user, Rng& rng);

// ---------------------------------------------------------------- sessions

struct Episode {
    std::uint64_t seed = 0;
    Trajectory trajectory;
    std::vector<FeatureVector> features;
    std::vector<TurnTrace> turns;
    DialogueState final_state;
    /// The user left before the turn cap.
    bool abandoned = false;

    RlEpisode rl_episode() const;
};

/// Runs turns until the rewarder stops the session, the cap is reached or
/// the user leaves.
Episode run_session(const SessionConfig& config, const PolicyParams& params, UserAgent& user,
                    std::uint64_t seed, std::string session_id = {});

// ---------------------------------------------------------------- training

struct TrainingOptions {
    int episodes = 100;
    int batch_size = 16;
    double alpha = 1e-4;
    double beta = 0.0;
    bool mean_baseline = false;
    OptimizerConfig optimizer;
    int histogram_buckets = 5;
    /// Collection threads; results are ordered by episode either way.
    int workers = 1;
};

struct EpochStats {
    int epoch = 0;
    int episodes = 0;
    int failed = 0;
    double mean_return = 0.0;
    double acceptance_rate = 0.0;
    double mean_entropy = 0.0;
    double mean_length = 0.0;
    std::array<int, kNumStrategies> strategy_counts{};
    int distinct_strategies = 0;
    /// [strategy][bucket] frequencies.
    std::vector<std::vector<double>> histogram;
    std::vector<RlStats> updates;
};

struct EpochResult {
    PolicyParams params;
    EpochStats stats;
    std::vector<Episode> episodes;
};

/// Collects `options.episodes` sessions under a frozen copy of `params`, then
/// applies one update per batch of `options.batch_size` (last batch may be
/// smaller). Failed sessions are counted and skipped.
EpochResult run_training_epoch(const SessionConfig& config, const PolicyParams& params,
                               const TrainingOptions& options, int epoch);

/// Seed of episode `i` in epoch `epoch`.
std::uint64_t episode_seed(std::uint64_t base, int epoch, int i);

struct SftOptions {
    int epochs = 10;
    double lr = 6e-6;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int turn_cap = 10;
    OptimizerConfig optimizer;
};

struct SftEpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    /// Top-1 accuracy over the whole corpus after the epoch.
    double accuracy = 0.0;
};

struct SftResult {
    PolicyParams params;
    std::vector<SftEpochStats> epochs;
};

SftResult run_sft(const PolicyParams& params, const std::vector<SftPair>& corpus,
                  const FeatureExtractor& features, const SftOptions& options);

/// Matrix [strategy][bucket]; turn t of a T-turn trajectory lands in bucket
/// floor((t-1)/T * buckets). Columns are normalized to sum to 1 (0 if empty).
std::vector<std::vector<double>> strategy_histogram(const std::vector<Trajectory>& trajectories, int buckets);

// ---------------------------------------------------------------- bandit

/// Known-optimum environment: the rewarder gives raw 5 when the system turn
/// used `optimal` and raw 2 otherwise; a scripted user never runs out.
struct BanditOptions {
    StrategyId optimal{0};
    int turn_cap = 10;
    double gamma = 0.5;
    double tau = 0.8;
    int reward_samples = 1;
    std::uint64_t seed = 0;
};

SessionConfig make_bandit_config(const BanditOptions& options);

/// The state the bandit starts from for a given episode seed.
DialogueState bandit_initial_state(std::uint64_t episode_seed);

/// Mean probability of the optimal strategy over `n` bandit opening states.
double bandit_optimal_probability(const PolicyParams& params, const BanditOptions& options, int n = 32);

/// Opening states labeled with the optimal strategy, for SFT warm-up.
std::vector<SftPair> bandit_sft_corpus(const BanditOptions& options, int n);

}  // namespace rso
