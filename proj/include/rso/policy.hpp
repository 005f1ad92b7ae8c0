#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rso/features.hpp"
#include "rso/rng.hpp"
#include "rso/strategy.hpp"

namespace rso {

using Logits = std::array<double, kNumStrategies>;

struct StrategyDistribution {
    Logits probs{};
    Logits logits{};
};

struct OptimizerConfig {
    enum class Kind { AdamW, Sgd };
    Kind kind = Kind::AdamW;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;

    static OptimizerConfig sgd() { return OptimizerConfig{Kind::Sgd, 0.9, 0.999, 1e-8, 0.0}; }
};

struct OptimizerState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::int64_t step = 0;

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Planner parameters: a 13 x dim row-major weight matrix plus optimizer state.
class PolicyParams {
public:
    explicit PolicyParams(std::size_t dim = kDefaultFeatureDim,
                          std::string layout_version = hashed_layout_version());

    std::size_t dim() const noexcept { return dim_; }
    const std::string& layout_version() const noexcept { return layout_version_; }

    double weight(int strategy, std::size_t feature) const {
        return weights_[static_cast<std::size_t>(strategy) * dim_ + feature];
    }
    double& weight(int strategy, std::size_t feature) {
        return weights_[static_cast<std::size_t>(strategy) * dim_ + feature];
    }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::vector<double>& weights() noexcept { return weights_; }
    const OptimizerState& optimizer() const noexcept { return optimizer_; }
    OptimizerState& optimizer() noexcept { return optimizer_; }

    bool all_finite() const;

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

private:
    std::size_t dim_;
    std::string layout_version_;
    std::vector<double> weights_;
    OptimizerState optimizer_;
};

/// Dense gradient with the same shape as PolicyParams::weights().
using Gradient = std::vector<double>;

Logits policy_logits(const PolicyParams& params, const FeatureVector& features);
StrategyDistribution softmax(const Logits& logits);
StrategyDistribution policy_distribution(const PolicyParams& params, const FeatureVector& features);

/// Inverse-CDF draw over probs in index order.
StrategyId sample_strategy(const StrategyDistribution& dist, Rng& rng);
StrategyId argmax_strategy(const StrategyDistribution& dist);

/// Natural-log entropy with 0 ln 0 = 0.
double entropy(const StrategyDistribution& dist);
double entropy(const Logits& probs);

/// R_t = sum_i gamma^i r_{t+i}, computed backwards.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

/// Applies one optimizer step that descends along `gradient`. Throws
/// NumericError, leaving `params` untouched, if anything becomes non-finite.
void apply_gradient(PolicyParams& params, const Gradient& gradient, double lr,
                    const OptimizerConfig& config);

// ---------------------------------------------------------------- SFT

struct SftExample {
    FeatureVector features;
    StrategyId gold;
};

/// Mean negative log-likelihood of the gold strategies.
double sft_loss(const PolicyParams& params, const std::vector<SftExample>& batch);

/// Gradient of sft_loss; also returns the loss.
Gradient sft_gradient(const PolicyParams& params, const std::vector<SftExample>& batch,
                      double* loss = nullptr);

struct SftStepResult {
    PolicyParams params;
    double loss = 0.0;
};

SftStepResult sft_step(const PolicyParams& params, const std::vector<SftExample>& batch, double lr,
                       const OptimizerConfig& config = {});

// ---------------------------------------------------------------- RL

/// One collected trajectory as seen by the update: per-turn features, the
/// sampled strategy and the turn reward.
struct RlEpisode {
    std::vector<FeatureVector> features;
    std::vector<StrategyId> strategies;
    std::vector<double> rewards;
};

struct RlOptions {
    double beta = 0.0;
    double gamma = 0.99;
    /// Subtract the batch-mean return from every R_t.
    bool mean_baseline = false;
};

struct RlStats {
    double mean_return = 0.0;   // mean over episodes of R_1
    double mean_entropy = 0.0;  // mean over all visited states
    double gradient_norm = 0.0;
    double objective = 0.0;
};

/// J = mean over episodes of [ sum_t ln pi(h_t|s_t) R_t + beta/T sum_t H(pi(.|s_t)) ],
/// with R_t held constant.
double rl_objective(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                    const RlOptions& options);

/// Analytic gradient of rl_objective (the ascent direction).
Gradient rl_gradient(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                     const RlOptions& options, RlStats* stats = nullptr);

struct RlUpdateResult {
    PolicyParams params;
    RlStats stats;
};

/// One ascent step on J with learning rate `alpha`.
RlUpdateResult rl_update(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                         double alpha, const RlOptions& options,
                         const OptimizerConfig& config = {});

// ---------------------------------------------------------------- checkpoints

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path, const std::string& expected_layout);

}  // namespace rso
