#pragma once

// Simulated-session and log-replay evaluation producing EvalRecords.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rso/corpus.hpp"
#include "rso/metrics.hpp"
#include "rso/session.hpp"

namespace rso {

/// One simulated conversation to run.
struct EvalCase {
    std::string dialogue_id;
    std::string persona;
    std::optional<std::string> gold_item;
    std::optional<std::string> opener;
};

/// Cases from a corpus: the first seeker utterance opens, the gold item is
/// the simulated user's target.
std::vector<EvalCase> cases_from_corpus(const std::vector<RawDialogue>& dialogues);

struct JudgeOptions {
    /// Backend for the WI, Cred and intention judges; no judge metrics when null.
    BackendPtr judge;
    int samples = 1;
    bool wi = true;
    bool cred = true;
    bool prs = true;
    /// Facts listed per item when measuring i_true.
    int item_fact_cap = 32;
};

using CaseUserFactory = std::function<std::unique_ptr<UserAgent>(const EvalCase&, std::uint64_t seed)>;

/// LLM-played users on `backend`.
CaseUserFactory simulated_users(BackendPtr backend, std::shared_ptr<const PromptLibrary> prompts);

/// Fills an EvalRecord from a finished session. Cred uses the facts the
/// session retrieved; PRS measures the gold item, or the most recently
/// recommended one when there is no gold.
EvalRecord evaluate_episode(const Episode& episode, const std::string& dialogue_id,
                            const std::optional<std::string>& gold_item, const SessionConfig& config,
                            const JudgeOptions& judges);

struct EvalRun {
    std::vector<Episode> episodes;
    std::vector<EvalRecord> records;
    MetricsReport report;
};

/// Runs one session per case (episode seed derived from `seed` and the case
/// position) and aggregates.
EvalRun run_evaluation(const SessionConfig& config, const PolicyParams& params, const std::vector<EvalCase>& cases,
                       const CaseUserFactory& users, const JudgeOptions& judges, std::uint64_t seed);

/// Re-scores logged sessions without running the Planner.
std::vector<EvalRecord> evaluate_logged(const std::vector<Episode>& episodes,
                                        const std::vector<std::optional<std::string>>& gold_items,
                                        const SessionConfig& config, const JudgeOptions& judges);

}  // namespace rso
