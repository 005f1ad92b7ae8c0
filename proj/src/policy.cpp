#include "rso/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "rso/error.hpp"

namespace rso {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

PolicyParams::PolicyParams(std::size_t dim, std::string layout_version)
    : dim_(dim),
      layout_version_(std::move(layout_version)),
      weights_(static_cast<std::size_t>(kNumStrategies) * dim, 0.0) {
    if (dim == 0) throw PreconditionError("policy dimension must be positive");
    optimizer_.first_moment.assign(weights_.size(), 0.0);
    optimizer_.second_moment.assign(weights_.size(), 0.0);
}

bool PolicyParams::all_finite() const {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
}

namespace {

void check_dim(const PolicyParams& params, const FeatureVector& features) {
    if (features.dim != params.dim()) {
        throw PreconditionError("feature dimension " + std::to_string(features.dim) +
                                " does not match policy dimension " +
                                std::to_string(params.dim()));
    }
}

/// Adds scale * g_logits (outer) features into grad.
void accumulate_outer(Gradient& grad, std::size_t dim, const Logits& g_logits,
                      const FeatureVector& features, double scale) {
    for (int h = 0; h < kNumStrategies; ++h) {
        const double g = g_logits[static_cast<std::size_t>(h)] * scale;
        if (g == 0.0) continue;
        double* row = grad.data() + static_cast<std::size_t>(h) * dim;
        for (const auto& [i, v] : features.entries) row[i] += g * v;
    }
}

void require_finite(const Gradient& g, const char* what) {
    for (double x : g) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
    }
}

double log_prob(const StrategyDistribution& d, StrategyId h) {
    // log-softmax from logits avoids log(0) for tiny probabilities
    double max_logit = *std::max_element(d.logits.begin(), d.logits.end());
    double sum = 0.0;
    for (double z : d.logits) sum += std::exp(z - max_logit);
    return d.logits[static_cast<std::size_t>(h.index())] - max_logit - std::log(sum);
}

}  // namespace

Logits policy_logits(const PolicyParams& params, const FeatureVector& features) {
    check_dim(params, features);
    Logits z{};
    for (int h = 0; h < kNumStrategies; ++h) {
        double acc = 0.0;
        for (const auto& [i, v] : features.entries) acc += params.weight(h, i) * v;
        z[static_cast<std::size_t>(h)] = acc;
    }
    return z;
}

StrategyDistribution softmax(const Logits& logits) {
    StrategyDistribution d;
    d.logits = logits;
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        d.probs[i] = std::exp(logits[i] - max_logit);
        sum += d.probs[i];
    }
    for (auto& p : d.probs) p /= sum;
    return d;
}

StrategyDistribution policy_distribution(const PolicyParams& params, const FeatureVector& features) {
    return softmax(policy_logits(params, features));
}

StrategyId sample_strategy(const StrategyDistribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double cdf = 0.0;
    int last_positive = 0;
    for (int h = 0; h < kNumStrategies; ++h) {
        const double p = dist.probs[static_cast<std::size_t>(h)];
        if (p > 0.0) last_positive = h;
        cdf += p;
        if (u < cdf) return StrategyId(h);
    }
    // rounding left cdf slightly below 1
    return StrategyId(last_positive);
}

StrategyId argmax_strategy(const StrategyDistribution& dist) {
    return StrategyId(static_cast<int>(
        std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin()));
}

double entropy(const Logits& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double entropy(const StrategyDistribution& dist) { return entropy(dist.probs); }

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
    if (rewards.empty()) throw PreconditionError("discounted_returns needs at least one reward");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw PreconditionError("gamma must lie in [0,1]");
    std::vector<double> out(rewards.size());
    double running = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        running = rewards[i] + gamma * running;
        out[i] = running;
    }
    return out;
}

void apply_gradient(PolicyParams& params, const Gradient& gradient, double lr,
                    const OptimizerConfig& config) {
    if (gradient.size() != params.weights().size()) {
        throw PreconditionError("gradient shape does not match the policy");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) throw PreconditionError("learning rate must be positive");
    require_finite(gradient, "gradient");

    PolicyParams next = params;
    auto& w = next.weights();
    auto& opt = next.optimizer();
    if (config.kind == OptimizerConfig::Kind::Sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gradient[i];
        ++opt.step;
    } else {
        ++opt.step;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(opt.step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(opt.step));
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = gradient[i];
            double& m = opt.first_moment[i];
            double& v = opt.second_moment[i];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            if (m == 0.0 && w[i] == 0.0) continue;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            w[i] -= lr * (m_hat / (std::sqrt(v_hat) + config.epsilon) + config.weight_decay * w[i]);
        }
    }
    if (!next.all_finite()) throw NumericError("update produced non-finite weights");
    params = std::move(next);
}

// ---------------------------------------------------------------- SFT

double sft_loss(const PolicyParams& params, const std::vector<SftExample>& batch) {
    if (batch.empty()) throw PreconditionError("SFT batch is empty");
    double loss = 0.0;
    for (const auto& ex : batch) {
        loss -= log_prob(policy_distribution(params, ex.features), ex.gold);
    }
    return loss / static_cast<double>(batch.size());
}

Gradient sft_gradient(const PolicyParams& params, const std::vector<SftExample>& batch,
                      double* loss) {
    if (batch.empty()) throw PreconditionError("SFT batch is empty");
    Gradient grad(params.weights().size(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& ex : batch) {
        if (!ex.gold.valid()) throw PreconditionError("gold strategy out of range");
        const auto dist = policy_distribution(params, ex.features);
        total -= log_prob(dist, ex.gold);
        Logits g = dist.probs;
        g[static_cast<std::size_t>(ex.gold.index())] -= 1.0;
        accumulate_outer(grad, params.dim(), g, ex.features, scale);
    }
    if (loss) *loss = total * scale;
    return grad;
}

SftStepResult sft_step(const PolicyParams& params, const std::vector<SftExample>& batch, double lr,
                       const OptimizerConfig& config) {
    double loss = 0.0;
    const auto grad = sft_gradient(params, batch, &loss);
    if (!std::isfinite(loss)) throw NumericError("non-finite SFT loss");
    SftStepResult result{params, loss};
    apply_gradient(result.params, grad, lr, config);
    return result;
}

// ---------------------------------------------------------------- RL

namespace {

void validate_episode(const RlEpisode& ep) {
    if (ep.features.empty()) throw PreconditionError("RL episode is empty");
    if (ep.features.size() != ep.strategies.size() || ep.features.size() != ep.rewards.size()) {
        throw PreconditionError("RL episode fields have unequal lengths");
    }
}

void validate_options(const RlOptions& o) {
    if (!(o.beta >= 0.0)) throw PreconditionError("beta must be >= 0");
    if (!(o.gamma >= 0.0 && o.gamma <= 1.0)) throw PreconditionError("gamma must lie in [0,1]");
}

std::vector<std::vector<double>> batch_returns(const std::vector<RlEpisode>& batch,
                                               const RlOptions& options) {
    std::vector<std::vector<double>> returns;
    returns.reserve(batch.size());
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& ep : batch) {
        validate_episode(ep);
        returns.push_back(discounted_returns(ep.rewards, options.gamma));
        for (double r : returns.back()) sum += r;
        count += returns.back().size();
    }
    if (options.mean_baseline && count > 0) {
        const double mean = sum / static_cast<double>(count);
        for (auto& rs : returns) {
            for (auto& r : rs) r -= mean;
        }
    }
    return returns;
}

}  // namespace

double rl_objective(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                    const RlOptions& options) {
    validate_options(options);
    if (batch.empty()) throw PreconditionError("RL batch is empty");
    const auto returns = batch_returns(batch, options);
    double total = 0.0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        const auto& ep = batch[e];
        const double inv_t = 1.0 / static_cast<double>(ep.features.size());
        for (std::size_t t = 0; t < ep.features.size(); ++t) {
            const auto dist = policy_distribution(params, ep.features[t]);
            total += log_prob(dist, ep.strategies[t]) * returns[e][t];
            total += options.beta * inv_t * entropy(dist);
        }
    }
    return total / static_cast<double>(batch.size());
}

Gradient rl_gradient(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                     const RlOptions& options, RlStats* stats) {
    validate_options(options);
    if (batch.empty()) throw PreconditionError("RL batch is empty");
    const auto returns = batch_returns(batch, options);
    Gradient grad(params.weights().size(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());

    double objective = 0.0;
    double entropy_sum = 0.0;
    double return_sum = 0.0;
    std::size_t states = 0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        const auto& ep = batch[e];
        const double inv_t = 1.0 / static_cast<double>(ep.features.size());
        return_sum += discounted_returns(ep.rewards, options.gamma).front();
        for (std::size_t t = 0; t < ep.features.size(); ++t) {
            const auto dist = policy_distribution(params, ep.features[t]);
            const double h_t = entropy(dist);
            const double r_t = returns[e][t];
            const auto chosen = static_cast<std::size_t>(ep.strategies[t].index());
            if (!ep.strategies[t].valid()) throw PreconditionError("strategy out of range");

            Logits g{};
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double p = dist.probs[j];
                // d ln pi(h)/dz_j = 1[j=h] - p_j
                double score = ((j == chosen) ? 1.0 : 0.0) - p;
                // dH/dz_j = -p_j (ln p_j + H)
                double d_entropy = p > 0.0 ? -p * (std::log(p) + h_t) : 0.0;
                g[j] = score * r_t + options.beta * inv_t * d_entropy;
            }
            accumulate_outer(grad, params.dim(), g, ep.features[t], scale);

            objective += log_prob(dist, ep.strategies[t]) * r_t + options.beta * inv_t * h_t;
            entropy_sum += h_t;
            ++states;
        }
    }
    if (stats) {
        double norm = 0.0;
        for (double x : grad) norm += x * x;
        stats->gradient_norm = std::sqrt(norm);
        stats->mean_entropy = entropy_sum / static_cast<double>(states);
        stats->mean_return = return_sum * scale;
        stats->objective = objective * scale;
    }
    return grad;
}

RlUpdateResult rl_update(const PolicyParams& params, const std::vector<RlEpisode>& batch,
                         double alpha, const RlOptions& options, const OptimizerConfig& config) {
    RlUpdateResult result{params, {}};
    auto grad = rl_gradient(params, batch, options, &result.stats);
    require_finite(grad, "policy gradient");
    // ascend J by descending -J
    for (auto& g : grad) g = -g;
    apply_gradient(result.params, grad, alpha, config);
    return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'R', 'S', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ParseError("truncated checkpoint: " + path);
    }
    return v;
}

void put_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::ifstream& in, std::vector<double>& v, const std::string& path) {
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
        throw ParseError("truncated checkpoint: " + path);
    }
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("paths.checkpoints", "cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    put(out, kFormatVersion);
    put(out, static_cast<std::uint32_t>(params.layout_version().size()));
    out.write(params.layout_version().data(),
              static_cast<std::streamsize>(params.layout_version().size()));
    put(out, static_cast<std::uint64_t>(params.dim()));
    put(out, static_cast<std::uint32_t>(kNumStrategies));
    put(out, static_cast<std::int64_t>(params.optimizer().step));
    put_doubles(out, params.weights());
    put_doubles(out, params.optimizer().first_moment);
    put_doubles(out, params.optimizer().second_moment);
    if (!out) throw ConfigError("paths.checkpoints", "write failed for " + path);
}

PolicyParams load_checkpoint(const std::string& path, const std::string& expected_layout) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint", "cannot read " + path);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw ParseError("not a policy checkpoint: " + path);
    }
    if (get<std::uint32_t>(in, path) != kFormatVersion) {
        throw ParseError("unsupported checkpoint format version: " + path);
    }
    const auto layout_len = get<std::uint32_t>(in, path);
    if (layout_len > 4096) throw ParseError("corrupt checkpoint header: " + path);
    std::string layout(layout_len, '\0');
    if (!in.read(layout.data(), layout_len)) throw ParseError("truncated checkpoint: " + path);
    if (layout != expected_layout) {
        throw ConfigError("checkpoint", "feature layout '" + layout + "' in " + path +
                                            " does not match expected '" + expected_layout + "'");
    }
    const auto dim = get<std::uint64_t>(in, path);
    if (get<std::uint32_t>(in, path) != static_cast<std::uint32_t>(kNumStrategies)) {
        throw ParseError("checkpoint strategy count mismatch: " + path);
    }
    if (dim == 0 || dim > (1u << 24)) throw ParseError("corrupt checkpoint dimension: " + path);
    PolicyParams params(static_cast<std::size_t>(dim), layout);
    params.optimizer().step = get<std::int64_t>(in, path);
    get_doubles(in, params.weights(), path);
    get_doubles(in, params.optimizer().first_moment, path);
    get_doubles(in, params.optimizer().second_moment, path);
    if (in.peek() != std::char_traits<char>::eof()) {
        throw ParseError("trailing bytes in checkpoint: " + path);
    }
    if (!params.all_finite()) throw NumericError("checkpoint holds non-finite weights: " + path);
    return params;
}

}  // namespace rso
