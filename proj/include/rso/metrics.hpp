#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rso/backend.hpp"
#include "rso/dialogue.hpp"
#include "rso/knowledge.hpp"
#include "rso/prompts.hpp"

namespace rso {

/// Watching intentions on the judge's 1-5 scale.
class IntentionTriple {
public:
    /// Throws PreconditionError unless i_true >= i_post.
    IntentionTriple(double i_pre, double i_post, double i_true);

    double i_pre() const noexcept { return pre_; }
    double i_post() const noexcept { return post_; }
    double i_true() const noexcept { return true_; }

    friend bool operator==(const IntentionTriple&, const IntentionTriple&) = default;

private:
    double pre_;
    double post_;
    double true_;
};

/// 1 - (i_true - i_post) / (i_true - i_pre), clamped to [0,1]; 1 when
/// i_true == i_pre.
double persuasiveness(const IntentionTriple& t);

/// Unique over total within-utterance token bigrams; 0 with no bigrams.
double distinct_2(const std::vector<std::string>& utterances);

/// 1 iff `gold` (case-insensitive) is among the first k entries.
int recall_at_k(const std::vector<std::string>& ranked, const std::string& gold, int k);

struct EvalRecord {
    std::string dialogue_id;
    bool accepted = false;
    int turns = 0;
    std::vector<std::string> recommended_items;
    std::optional<std::string> gold_item;
    std::optional<double> wi;
    std::optional<double> cred;
    std::optional<double> prs;
    std::vector<std::string> system_utterances;

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct MetricsReport {
    int n = 0;
    double conv_sr = 0.0;
    double rec_sr = 0.0;
    /// Absent when no record has a gold item.
    std::optional<double> recall_at_1;
    std::optional<double> recall_at_5;
    std::optional<double> wi_mean;
    std::optional<double> prs_mean;
    std::optional<double> cred_mean;
    double dist2 = 0.0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Throws PreconditionError on an empty list.
MetricsReport aggregate(const std::vector<EvalRecord>& records);

// ---------------------------------------------------------------- judges

double judge_watching_intention(ExpertBackend& backend, const PromptLibrary& prompts,
                                const std::string& transcript, int samples);

double judge_credibility(ExpertBackend& backend, const PromptLibrary& prompts, const std::string& transcript,
                         const FactBundle& facts, int samples);

/// Transcript of the conversation before the first system utterance that
/// mentions `item`. If no system utterance does, the first system/user
/// exchange.
DialogueState pre_recommendation_prefix(const DialogueState& state, const std::string& item);

/// i_pre on the prefix, i_post on the full transcript, i_true on the full
/// transcript plus `item_info`; i_true is raised to i_post when lower.
IntentionTriple measure_intentions(ExpertBackend& backend, const PromptLibrary& prompts,
                                   const DialogueState& state, const std::string& item,
                                   const FactBundle& item_info, int samples);

// ---------------------------------------------------------------- items

/// Titles wrapped in [[...]] in `utterance`, in order of appearance.
std::vector<std::string> marked_items(const std::string& utterance);

/// Items recommended over the system utterances, most recent mention first,
/// deduplicated case-insensitively. Uses [[...]] markers; when no utterance
/// carries a marker, falls back to whole-word name matches against `index`.
std::vector<std::string> recommended_items(const DialogueState& state, const EntityIndex* index = nullptr);

}  // namespace rso
