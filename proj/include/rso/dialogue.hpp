#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rso/strategy.hpp"

namespace rso {

enum class Speaker { System, User };

struct Utterance {
    Speaker speaker = Speaker::User;
    std::string text;
    int turn_index = 1;

    friend bool operator==(const Utterance&, const Utterance&) = default;
};

using StrategyCounts = std::array<int, kNumStrategies>;

/// The dialogue state s_t. Values are never mutated by the transition
/// functions below; each returns a new state.
struct DialogueState {
    std::string session_id;
    std::vector<Utterance> history;
    int turn = 1;
    std::optional<StrategyId> last_strategy;
    StrategyCounts strategy_counts{};
    std::optional<double> last_reward;
    std::optional<std::string> pinned_context;

    static DialogueState fresh(std::string session_id,
                               std::optional<std::string> pinned_context = std::nullopt);

    bool awaiting_user() const noexcept {
        return !history.empty() && history.back().speaker == Speaker::System;
    }
    bool awaiting_system() const noexcept { return !awaiting_user(); }
    int system_turns() const noexcept;

    /// Latest user utterance text, if any.
    std::optional<std::string> last_user_text() const;
    std::optional<std::string> last_system_text() const;

    friend bool operator==(const DialogueState&, const DialogueState&) = default;
};

/// Appends the system utterance for `strategy`; `turn` does not advance until
/// the user replies.
DialogueState apply_system_turn(const DialogueState& state, StrategyId strategy,
                                const std::string& action_text);

/// Appends a user utterance. On an empty history this records the user's
/// opening message and leaves `turn` unchanged; otherwise the last entry must
/// be a system utterance and `turn` advances by one.
DialogueState apply_user_turn(const DialogueState& state, const std::string& text);

DialogueState with_reward(const DialogueState& state, double reward);

/// "SYSTEM: ..." / "USER: ..." lines in history order, pinned context first.
std::string render_transcript(const DialogueState& state);

/// Number of utterances spoken by `speaker`.
int count_speaker(const DialogueState& state, Speaker speaker);

struct TurnRecord {
    std::uint64_t state_features_digest = 0;
    StrategyId strategy;
    double strategy_logprob = 0.0;
    std::string action_text;
    double reward = 0.0;
    bool terminated = false;

    friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

struct Outcome {
    enum class Kind { Accepted, TurnCapReached };
    Kind kind = Kind::TurnCapReached;
    int turn = 0;  // accepting turn when kind == Accepted

    static Outcome accepted_at(int k) { return {Kind::Accepted, k}; }
    static Outcome turn_cap() { return {Kind::TurnCapReached, 0}; }
    bool accepted() const noexcept { return kind == Kind::Accepted; }

    friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct Trajectory {
    std::vector<TurnRecord> records;
    Outcome outcome;

    /// Throws PreconditionError when the record invariants do not hold.
    void validate(int turn_cap) const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// A state awaiting a system decision together with its annotated strategy.
struct SftPair {
    DialogueState state;
    StrategyId gold;

    friend bool operator==(const SftPair&, const SftPair&) = default;
};

}  // namespace rso
