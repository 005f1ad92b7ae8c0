#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rso/backend.hpp"
#include "rso/dialogue.hpp"
#include "rso/knowledge.hpp"
#include "rso/preference.hpp"
#include "rso/prompts.hpp"
#include "rso/strategy.hpp"

namespace rso {

/// Names used in ChatRequest::expert and CallLog entries.
namespace expert_name {
inline constexpr const char* kPreference = "preference";
inline constexpr const char* kActor = "actor";
inline constexpr const char* kRewarder = "rewarder";
inline constexpr const char* kUser = "user";
inline constexpr const char* kJudgeWI = "judge_wi";
inline constexpr const char* kJudgeCred = "judge_cred";
}  // namespace expert_name

struct RewardSignal {
    std::vector<double> raw_scores;
    double mean_raw = 1.0;
    double normalized = 0.0;  // (mean_raw - 1) / 4
    bool terminate = false;   // normalized > tau
};

/// Builds the signal from parsed 1-5 scores.
RewardSignal make_reward_signal(std::vector<double> raw_scores, double tau);

/// First standalone number lying in [1, 5], e.g. "Score: 4/5" -> 4. Numbers
/// glued to letters ("gpt4") or negative numbers do not count.
std::optional<double> parse_score(std::string_view reply);

/// Caps `s` at `limit` bytes without splitting a UTF-8 sequence.
std::string cap_utf8(std::string s, std::size_t limit);

/// Preference reasoner. Requires at least one user utterance in `state`.
PreferenceSummary infer_preference(ExpertBackend& backend, const PromptLibrary& prompts,
                                   const DialogueState& state);

/// Actor: instantiates `strategy` as the next system message.
std::string generate_response(ExpertBackend& backend, const PromptLibrary& prompts,
                              const StrategyDef& strategy, const PreferenceSummary& pref,
                              const FactBundle& facts, const DialogueState& state,
                              std::size_t char_limit = 600);

/// Rewarder: `samples` judge calls on s_{t+1}, averaged and normalized.
RewardSignal score_turn(ExpertBackend& backend, const PromptLibrary& prompts,
                        const DialogueState& next_state, int samples, double tau);

/// Simulated user: the next user message given the conversation so far.
std::string simulate_user_reply(ExpertBackend& backend, const PromptLibrary& prompts,
                                const DialogueState& state, const std::string& persona,
                                const std::optional<std::string>& target_item,
                                std::size_t char_limit = 400);

/// LLM-as-judge metric on the 1-5 scale. `kind` must be JudgeWI or JudgeCred.
double judge_metric(ExpertBackend& backend, const PromptLibrary& prompts, PromptKind kind,
                    const std::string& transcript, int samples, const std::string& facts = {});

}  // namespace rso
