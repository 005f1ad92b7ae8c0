#include "rso/session.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

std::string_view phase_name(Phase phase) {
    switch (phase) {
        case Phase::Plan: return "plan";
        case Phase::Preference: return "preference";
        case Phase::Retrieve: return "retrieve";
        case Phase::Act: return "act";
        case Phase::User: return "user";
        case Phase::Reward: return "reward";
        case Phase::StopCheck: return "stop-check";
    }
    return "unknown";
}

// ---------------------------------------------------------------- users

ScriptedUser::ScriptedUser(std::vector<std::string> replies, std::optional<std::string> opener)
    : replies_(std::move(replies)), opener_(std::move(opener)) {
    if (replies_.empty()) throw PreconditionError("scripted user needs at least one reply");
}

std::optional<std::string> ScriptedUser::reply(const DialogueState&) {
    if (next_ >= replies_.size()) return std::nullopt;
    return replies_[next_++];
}

SimulatedUser::SimulatedUser(BackendPtr backend, std::shared_ptr<const PromptLibrary> prompts, std::string persona,
                             std::optional<std::string> target_item, std::optional<std::string> opener)
    : backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      persona_(std::move(persona)),
      target_item_(std::move(target_item)),
      opener_(std::move(opener)) {
    if (!backend_ || !prompts_) throw PreconditionError("simulated user needs a backend and prompts");
}

std::optional<std::string> SimulatedUser::reply(const DialogueState& state) {
    return simulate_user_reply(*backend_, *prompts_, state, persona_, target_item_);
}

LiveUser::LiveUser(std::chrono::milliseconds reply_timeout, SystemMessageFn on_system_message)
    : timeout_(reply_timeout), on_system_(std::move(on_system_message)) {}

std::optional<std::string> LiveUser::reply(const DialogueState& state) {
    if (on_system_) on_system_(state);
    std::unique_lock lock(mu_);
    const bool ready = cv_.wait_for(lock, timeout_, [&] { return closed_ || !inbox_.empty(); });
    if (!ready || inbox_.empty()) return std::nullopt;
    auto text = std::move(inbox_.front());
    inbox_.pop_front();
    return text;
}

bool LiveUser::push(std::string text) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return false;
        inbox_.push_back(std::move(text));
    }
    cv_.notify_all();
    return true;
}

void LiveUser::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool LiveUser::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

// ---------------------------------------------------------------- config

void SessionConfig::validate() const {
    if (turn_cap < 1) throw ConfigError("session.turn_cap", "must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("session.gamma", "must lie in [0,1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("session.tau", "must lie in [0,1]");
    if (reward_samples < 1) throw ConfigError("session.reward_samples", "must be >= 1");
    if (top_k < 1) throw ConfigError("session.top_k", "must be >= 1");
    if (per_entity_cap < 0) throw ConfigError("session.per_entity_cap", "must be >= 0");
    if (!experts.preference) throw ConfigError("experts.preference", "backend missing");
    if (!experts.actor) throw ConfigError("experts.actor", "backend missing");
    if (!experts.rewarder) throw ConfigError("experts.rewarder", "backend missing");
    if (!prompts) throw ConfigError("paths.prompts", "prompt library missing");
    if (!catalog) throw ConfigError("paths.catalog", "strategy catalog missing");
    if (index && embedder && index->dim() != embedder->dim()) {
        throw ConfigError("paths.index", "index dimension does not match the embedder");
    }
}

// ---------------------------------------------------------------- one turn

TurnResult run_turn(const SessionConfig& config, const PolicyParams& params, const DialogueState& state,
                    UserAgent& user, Rng& rng) {
    if (!state.awaiting_system()) throw PreconditionError("state is waiting for the user");
    const int turn = state.turn;
    const auto notify = [&](Phase p) {
        if (config.observer) config.observer(p, turn);
    };

    TurnResult out;
    auto& trace = out.trace;
    trace.turn = turn;

    notify(Phase::Plan);
    out.features = config.features.extract(state, config.turn_cap);
    if (out.features.dim != params.dim()) {
        throw ConfigError("checkpoint", "policy dimension does not match the feature layout");
    }
    const auto dist = policy_distribution(params, out.features);
    const StrategyId h = config.greedy ? argmax_strategy(dist) : sample_strategy(dist, rng);
    trace.entropy = entropy(dist);

    if (state.last_user_text()) {
        notify(Phase::Preference);
        trace.preference = infer_preference(*config.experts.preference, *config.prompts, state);
    }

    if (config.graph && config.index && config.embedder) {
        const PreferenceSummary empty;
        const auto& pref = trace.preference ? *trace.preference : empty;
        if (!text::trim(retrieval_query(state, pref, config.query_mode)).empty()) {
            notify(Phase::Retrieve);
            try {
                const auto entities = retrieve_entities(*config.index, *config.embedder, state, pref,
                                                        config.top_k, config.query_mode);
                trace.facts = retrieve_facts(*config.graph, entities, config.per_entity_cap);
            } catch (const ExpertError&) {
                throw;
            } catch (const Error& e) {
                throw ExpertError("retriever", turn, e.what());
            }
        }
    }

    notify(Phase::Act);
    const auto action = generate_response(*config.experts.actor, *config.prompts, config.catalog->at(h),
                                          trace.preference.value_or(PreferenceSummary{}), trace.facts, state,
                                          config.reply_char_limit);
    const auto after = apply_system_turn(state, h, action);

    trace.record.state_features_digest = out.features.digest();
    trace.record.strategy = h;
    trace.record.strategy_logprob = std::log(dist.probs[static_cast<std::size_t>(h.index())]);
    trace.record.action_text = after.history.back().text;

    notify(Phase::User);
    std::optional<std::string> reply;
    try {
        reply = user.reply(after);
    } catch (const ExpertError&) {
        throw;
    } catch (const Error& e) {
        throw ExpertError(expert_name::kUser, turn, e.what());
    }
    if (reply && text::trim(*reply).empty()) reply = "...";
    if (!reply) {
        out.next_state = after;
        return out;
    }
    trace.user_reply = text::trim(*reply);
    auto next = apply_user_turn(after, *trace.user_reply);

    notify(Phase::Reward);
    trace.reward = score_turn(*config.experts.rewarder, *config.prompts, next, config.reward_samples, config.tau);
    next = with_reward(next, trace.reward->normalized);
    trace.record.reward = trace.reward->normalized;

    notify(Phase::StopCheck);
    trace.record.terminated = trace.reward->terminate;
    out.next_state = std::move(next);
    return out;
}

// ---------------------------------------------------------------- sessions

RlEpisode Episode::rl_episode() const {
    RlEpisode e;
    e.features = features;
    for (const auto& r : trajectory.records) {
        e.strategies.push_back(r.strategy);
        e.rewards.push_back(r.reward);
    }
    return e;
}

Episode run_session(const SessionConfig& config, const PolicyParams& params, UserAgent& user, std::uint64_t seed,
                    std::string session_id) {
    config.validate();
    if (session_id.empty()) session_id = "session-" + std::to_string(seed);
    Rng rng(seed);
    Episode ep;
    ep.seed = seed;
    auto state = DialogueState::fresh(session_id, config.pinned_context);
    if (auto opener = user.opening()) state = apply_user_turn(state, *opener);

    for (int t = 0; t < config.turn_cap; ++t) {
        if (!user.can_continue()) {
            ep.abandoned = true;
            break;
        }
        auto result = run_turn(config, params, state, user, rng);
        state = std::move(result.next_state);
        ep.features.push_back(std::move(result.features));
        ep.trajectory.records.push_back(result.trace.record);
        const bool stop = result.trace.record.terminated;
        const bool left = !result.trace.user_reply;
        if (config.on_turn) config.on_turn(result.trace, state);
        ep.turns.push_back(std::move(result.trace));
        if (stop) {
            ep.trajectory.outcome = Outcome::accepted_at(static_cast<int>(ep.trajectory.records.size()));
            break;
        }
        if (left) {
            ep.abandoned = true;
            break;
        }
    }
    if (ep.trajectory.records.empty()) throw Error("session " + session_id + " ended before its first turn");
    ep.trajectory.validate(config.turn_cap);
    ep.final_state = std::move(state);
    return ep;
}

// ---------------------------------------------------------------- training

std::uint64_t episode_seed(std::uint64_t base, int epoch, int i) {
    return derive_seed(derive_seed(base, static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(i));
}

namespace {

std::vector<std::optional<Episode>> collect(const SessionConfig& config, const PolicyParams& snapshot,
                                            const TrainingOptions& options, int epoch, std::string* first_error) {
    const auto n = static_cast<std::size_t>(options.episodes);
    std::vector<std::optional<Episode>> slots(n);
    std::vector<std::string> errors(n);
    const auto one = [&](std::size_t i) {
        const auto seed = episode_seed(config.rng_seed, epoch, static_cast<int>(i));
        try {
            auto user = config.users(seed);
            slots[i] = run_session(config, snapshot, *user, seed);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.workers), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mu;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (auto i = next++; i < n; i = next++) {
                    try {
                        one(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mu);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    for (const auto& e : errors) {
        if (!e.empty()) {
            *first_error = e;
            break;
        }
    }
    return slots;
}

}  // namespace

EpochResult run_training_epoch(const SessionConfig& config, const PolicyParams& params,
                               const TrainingOptions& options, int epoch) {
    if (options.episodes < 1) throw ConfigError("training.episodes_per_epoch", "must be >= 1");
    if (options.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
    if (!(options.alpha > 0.0)) throw ConfigError("training.rl_lr", "must be > 0");
    if (!(options.beta >= 0.0)) throw ConfigError("training.beta", "must be >= 0");
    if (options.workers < 1) throw ConfigError("training.workers", "must be >= 1");
    if (options.histogram_buckets < 1) throw ConfigError("training.histogram_buckets", "must be >= 1");
    if (!config.users) throw ConfigError("session.user", "no user factory");
    config.validate();

    const PolicyParams snapshot = params;
    std::string first_error;
    auto slots = collect(config, snapshot, options, epoch, &first_error);

    EpochResult result{params, {}, {}};
    auto& stats = result.stats;
    stats.epoch = epoch;
    for (auto& s : slots) {
        if (s) {
            result.episodes.push_back(std::move(*s));
        } else {
            ++stats.failed;
        }
    }
    if (result.episodes.empty()) {
        throw Error("epoch " + std::to_string(epoch) + " collected no trajectories: " + first_error);
    }

    const double n = static_cast<double>(result.episodes.size());
    std::size_t visited = 0;
    std::vector<Trajectory> trajectories;
    for (const auto& ep : result.episodes) {
        std::vector<double> rewards;
        for (const auto& r : ep.trajectory.records) {
            rewards.push_back(r.reward);
            ++stats.strategy_counts[static_cast<std::size_t>(r.strategy.index())];
        }
        stats.mean_return += discounted_returns(rewards, config.gamma).front();
        stats.acceptance_rate += ep.trajectory.outcome.accepted() ? 1.0 : 0.0;
        stats.mean_length += static_cast<double>(rewards.size());
        for (const auto& t : ep.turns) stats.mean_entropy += t.entropy;
        visited += ep.turns.size();
        trajectories.push_back(ep.trajectory);
    }
    stats.episodes = static_cast<int>(result.episodes.size());
    stats.mean_return /= n;
    stats.acceptance_rate /= n;
    stats.mean_length /= n;
    stats.mean_entropy /= static_cast<double>(visited);
    for (int c : stats.strategy_counts) stats.distinct_strategies += c > 0 ? 1 : 0;
    stats.histogram = strategy_histogram(trajectories, options.histogram_buckets);

    const RlOptions rl{options.beta, config.gamma, options.mean_baseline};
    const auto batch_size = static_cast<std::size_t>(options.batch_size);
    for (std::size_t start = 0; start < result.episodes.size(); start += batch_size) {
        std::vector<RlEpisode> batch;
        for (std::size_t i = start; i < std::min(start + batch_size, result.episodes.size()); ++i) {
            batch.push_back(result.episodes[i].rl_episode());
        }
        auto update = rl_update(result.params, batch, options.alpha, rl, options.optimizer);
        result.params = std::move(update.params);
        stats.updates.push_back(update.stats);
    }
    return result;
}

SftResult run_sft(const PolicyParams& params, const std::vector<SftPair>& corpus, const FeatureExtractor& features,
                  const SftOptions& options) {
    if (corpus.empty()) throw PreconditionError("SFT corpus is empty");
    if (options.epochs < 1) throw ConfigError("training.sft_epochs", "must be >= 1");
    if (options.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
    if (!(options.lr > 0.0)) throw ConfigError("training.sft_lr", "must be > 0");
    if (params.dim() != features.dim() || params.layout_version() != features.layout_version()) {
        throw ConfigError("checkpoint", "policy layout does not match the feature extractor");
    }

    std::vector<SftExample> examples;
    examples.reserve(corpus.size());
    for (const auto& pair : corpus) {
        if (!pair.gold.valid()) throw PreconditionError("SFT pair has an invalid strategy id");
        if (!pair.state.awaiting_system()) throw PreconditionError("SFT state must await a system turn");
        examples.push_back({features.extract(pair.state, options.turn_cap), pair.gold});
    }

    SftResult result{params, {}};
    Rng rng(options.seed);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(options.batch_size);
    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<SftExample> batch;
            for (std::size_t i = start; i < std::min(start + batch_size, order.size()); ++i) {
                batch.push_back(examples[order[i]]);
            }
            auto step = sft_step(result.params, batch, options.lr, options.optimizer);
            result.params = std::move(step.params);
            loss_sum += step.loss * static_cast<double>(batch.size());
        }
        int correct = 0;
        for (const auto& ex : examples) {
            correct += argmax_strategy(policy_distribution(result.params, ex.features)) == ex.gold ? 1 : 0;
        }
        const double n = static_cast<double>(examples.size());
        result.epochs.push_back({epoch, loss_sum / n, correct / n});
    }
    return result;
}

std::vector<std::vector<double>> strategy_histogram(const std::vector<Trajectory>& trajectories, int buckets) {
    if (buckets < 1) throw PreconditionError("histogram needs at least one bucket");
    const auto nb = static_cast<std::size_t>(buckets);
    std::vector<std::vector<double>> hist(kNumStrategies, std::vector<double>(nb, 0.0));
    std::vector<double> totals(nb, 0.0);
    for (const auto& traj : trajectories) {
        const auto length = traj.records.size();
        for (std::size_t i = 0; i < length; ++i) {
            const auto b = i * nb / length;
            hist[static_cast<std::size_t>(traj.records[i].strategy.index())][b] += 1.0;
            totals[b] += 1.0;
        }
    }
    for (auto& row : hist) {
        for (std::size_t b = 0; b < nb; ++b) {
            if (totals[b] > 0.0) row[b] /= totals[b];
        }
    }
    return hist;
}

// ---------------------------------------------------------------- bandit

namespace {

const std::vector<std::string>& bandit_openers() {
    static const std::vector<std::string> v = {
        "Hi! Can you recommend a movie for tonight?",
        "I'm looking for something to watch.",
        "Any good movie suggestions?",
        "I need a film for the weekend.",
        "What should I watch tonight?",
    };
    return v;
}

const std::vector<std::string>& bandit_replies() {
    static const std::vector<std::string> v = {
        "Hmm, I'm not sure about that.", "Tell me more.", "Maybe. What else do you have?",
        "I don't know.", "Okay, go on.",
    };
    return v;
}

Rng bandit_user_rng(std::uint64_t episode_seed) { return Rng(derive_seed(episode_seed, 0xB4D17)); }

std::string pick(const std::vector<std::string>& pool, Rng& rng) { return pool[rng.below(pool.size())]; }

}  // namespace

DialogueState bandit_initial_state(std::uint64_t seed) {
    auto rng = bandit_user_rng(seed);
    return apply_user_turn(DialogueState::fresh("session-" + std::to_string(seed)), pick(bandit_openers(), rng));
}

SessionConfig make_bandit_config(const BanditOptions& options) {
    const auto catalog = std::make_shared<StrategyCatalog>(catalog_default());
    if (!options.optimal.valid()) throw ConfigError("bandit.optimal", "not a strategy id");
    const auto& best = catalog->at(options.optimal).name;

    const auto quiet = [](MockBackend::Responder r) {
        auto b = std::make_shared<MockBackend>(std::move(r));
        b->keep_requests(false);
        return b;
    };
    SessionConfig c;
    c.turn_cap = options.turn_cap;
    c.gamma = options.gamma;
    c.tau = options.tau;
    c.reward_samples = options.reward_samples;
    c.rng_seed = options.seed;
    c.catalog = catalog;
    c.prompts = std::make_shared<PromptLibrary>(PromptLibrary::defaults());
    c.experts.preference = quiet(mock::constant("SUMMARY: Wants a movie.\nLIKES: none\nDISLIKES: none\nHINTS: none"));
    c.experts.actor = quiet(mock::templated("[{strategy_name}] Let me tell you about [[{top_entity}]]."));
    c.experts.rewarder = quiet(mock::rules("last_system", {{"[" + best + "]", "5"}}, "2"));
    const int cap = options.turn_cap;
    c.users = [cap](std::uint64_t seed) -> std::unique_ptr<UserAgent> {
        auto rng = bandit_user_rng(seed);
        auto opener = pick(bandit_openers(), rng);
        std::vector<std::string> replies;
        for (int i = 0; i < cap; ++i) replies.push_back(pick(bandit_replies(), rng));
        return std::make_unique<ScriptedUser>(std::move(replies), std::move(opener));
    };
    return c;
}

double bandit_optimal_probability(const PolicyParams& params, const BanditOptions& options, int n) {
    if (n < 1) throw PreconditionError("need at least one probe state");
    const FeatureExtractor features;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto state = bandit_initial_state(derive_seed(options.seed ^ 0x9E0BE, static_cast<std::uint64_t>(i)));
        const auto dist = policy_distribution(params, features.extract(state, options.turn_cap));
        sum += dist.probs[static_cast<std::size_t>(options.optimal.index())];
    }
    return sum / n;
}

std::vector<SftPair> bandit_sft_corpus(const BanditOptions& options, int n) {
    const FeatureExtractor features;
    std::vector<SftPair> out;
    for (int i = 0; i < n; ++i) {
        const auto seed = derive_seed(options.seed ^ 0x5F7C0, static_cast<std::uint64_t>(i));
        auto state = bandit_initial_state(seed);
        auto rng = bandit_user_rng(seed);
        pick(bandit_openers(), rng);
        // deeper states: a few turns that missed the optimal strategy
        const int depth = std::min(i % 3, options.turn_cap - 1);
        for (int d = 0; d < depth; ++d) {
            const StrategyId other((options.optimal.index() + 1 + d) % kNumStrategies);
            state = apply_system_turn(state, other, "[" + catalog_default().at(other).name + "] ...");
            state = with_reward(apply_user_turn(state, pick(bandit_replies(), rng)), 0.25);
        }
        out.push_back({std::move(state), options.optimal});
    }
    return out;
}

}  // namespace rso
