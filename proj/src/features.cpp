#include "rso/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

double FeatureVector::at(std::size_t index) const {
    const auto it = std::lower_bound(entries.begin(), entries.end(), index,
                                     [](const auto& e, std::size_t i) { return e.first < i; });
    return it != entries.end() && it->first == index ? it->second : 0.0;
}

std::vector<double> FeatureVector::dense() const {
    std::vector<double> out(dim, 0.0);
    for (const auto& [i, v] : entries) out[i] = v;
    return out;
}

std::uint64_t FeatureVector::digest() const {
    std::uint64_t h = text::fnv1a(std::to_string(dim));
    for (const auto& [i, v] : entries) {
        char buf[16];
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((static_cast<std::uint64_t>(i) >> (8 * b)) & 0xff);
        for (int b = 0; b < 8; ++b) buf[8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
        h = text::fnv1a(std::string_view(buf, 16), h);
    }
    return h;
}

std::size_t text_bucket(std::string_view key) {
    return static_cast<std::size_t>(text::fnv1a(key) % layout::kHashBuckets);
}

std::vector<std::size_t> text_buckets(std::string_view utterance) {
    const auto tokens = text::tokenize(utterance);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out.push_back(text_bucket(tokens[i]));
        if (i + 1 < tokens.size()) out.push_back(text_bucket(tokens[i] + " " + tokens[i + 1]));
    }
    return out;
}

std::string hashed_layout_version() { return "rso-features-v1/hashed-4096"; }

FeatureExtractor::FeatureExtractor(TextEmbedFn embed, std::size_t embedding_dim)
    : embed_(std::move(embed)), text_dim_(embedding_dim) {
    if (!embed_ || embedding_dim == 0) {
        throw PreconditionError("dense text features need an embedder and a positive dimension");
    }
}

std::string FeatureExtractor::layout_version() const {
    if (!embed_) return hashed_layout_version();
    return "rso-features-v1/dense-" + std::to_string(text_dim_);
}

FeatureVector FeatureExtractor::extract(const DialogueState& state, int turn_cap) const {
    if (turn_cap < 1) throw PreconditionError("turn_cap must be >= 1");
    FeatureVector f;
    f.dim = dim();
    auto& e = f.entries;
    e.emplace_back(layout::kBias, 1.0);
    if (state.last_strategy) {
        e.emplace_back(layout::kPrevStrategy + state.last_strategy->index(), 1.0);
    } else {
        e.emplace_back(layout::kPrevNone, 1.0);
    }
    e.emplace_back(layout::kTurn, static_cast<double>(state.turn) / turn_cap);
    for (int s = 0; s < kNumStrategies; ++s) {
        const int c = std::min(state.strategy_counts[static_cast<std::size_t>(s)], layout::kCountClip);
        if (c > 0) e.emplace_back(layout::kCounts + s, static_cast<double>(c) / layout::kCountClip);
    }
    if (!state.last_reward) {
        e.emplace_back(layout::kRewardMissing, 1.0);
    } else {
        const double r = std::clamp(*state.last_reward, 0.0, 1.0);
        const auto bucket = std::min<std::size_t>(static_cast<std::size_t>(r / 0.2), 4);
        e.emplace_back(layout::kRewardBucket + bucket, 1.0);
    }

    const auto user = state.last_user_text();
    if (user) {
        if (embed_) {
            const auto v = embed_(*user);
            if (v.size() != text_dim_) throw PreconditionError("embedding dimension mismatch");
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (v[i] != 0.0) e.emplace_back(layout::kText + i, v[i]);
            }
        } else {
            std::map<std::size_t, double> counts;
            for (auto b : text_buckets(*user)) counts[b] += 1.0;
            for (const auto& [b, c] : counts) e.emplace_back(layout::kText + b, c);
        }
    }
    std::sort(e.begin(), e.end());
    for (const auto& [i, v] : e) {
        if (!std::isfinite(v)) throw NumericError("non-finite feature at slot " + std::to_string(i));
    }
    return f;
}

FeatureVector extract_features(const DialogueState& state, int turn_cap) {
    static const FeatureExtractor hashed;
    return hashed.extract(state, turn_cap);
}

}  // namespace rso
