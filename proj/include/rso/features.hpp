#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rso/dialogue.hpp"

namespace rso {

/// Slot layout of the Planner's input vector.
///
///   [0]            bias, always 1
///   [1]            previous strategy: none
///   [2 .. 14]      previous strategy one-hot, by strategy index
///   [15]           turn / turn_cap
///   [16 .. 28]     per-strategy usage count, clipped to 5, divided by 5
///   [29]           last reward: missing
///   [30 .. 34]     last reward buckets [0,.2) [.2,.4) [.4,.6) [.6,.8) [.8,1]
///   [35 ..]        text block: hashed unigram+bigram counts of the latest
///                  user utterance, or a dense embedding of it
namespace layout {
inline constexpr std::size_t kBias = 0;
inline constexpr std::size_t kPrevNone = 1;
inline constexpr std::size_t kPrevStrategy = 2;
inline constexpr std::size_t kTurn = 15;
inline constexpr std::size_t kCounts = 16;
inline constexpr std::size_t kRewardMissing = 29;
inline constexpr std::size_t kRewardBucket = 30;
inline constexpr std::size_t kText = 35;
inline constexpr std::size_t kHashBuckets = 4096;
inline constexpr int kCountClip = 5;
}  // namespace layout

inline constexpr std::size_t kDefaultFeatureDim = layout::kText + layout::kHashBuckets;  // 4131

/// Sparse vector; entries sorted by index with no duplicates.
struct FeatureVector {
    std::size_t dim = kDefaultFeatureDim;
    std::vector<std::pair<std::uint32_t, double>> entries;

    double at(std::size_t index) const;
    std::vector<double> dense() const;
    /// FNV-1a over the (index, value bits) sequence.
    std::uint64_t digest() const;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Returns a fixed-dimension embedding of a text.
using TextEmbedFn = std::function<std::vector<double>(std::string_view)>;

class FeatureExtractor {
public:
    /// Hashed text block of 4096 buckets.
    FeatureExtractor() = default;

    /// Dense text block of `embedding_dim` slots filled by `embed`.
    FeatureExtractor(TextEmbedFn embed, std::size_t embedding_dim);

    std::size_t dim() const noexcept { return layout::kText + text_dim_; }

    /// Version string written into checkpoints; loading rejects mismatches.
    std::string layout_version() const;

    FeatureVector extract(const DialogueState& state, int turn_cap) const;

private:
    TextEmbedFn embed_;
    std::size_t text_dim_ = layout::kHashBuckets;
};

/// Hashed-layout extraction.
FeatureVector extract_features(const DialogueState& state, int turn_cap);

/// Bucket of a unigram ("good") or bigram ("good movie") key.
std::size_t text_bucket(std::string_view key);

/// Bucket indices (relative to the text block) touched by `utterance`.
std::vector<std::size_t> text_buckets(std::string_view utterance);

std::string hashed_layout_version();

}  // namespace rso
