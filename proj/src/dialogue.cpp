#include "rso/dialogue.hpp"

#include <numeric>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

DialogueState DialogueState::fresh(std::string session_id,
                                   std::optional<std::string> pinned_context) {
    DialogueState s;
    s.session_id = std::move(session_id);
    s.pinned_context = std::move(pinned_context);
    return s;
}

int DialogueState::system_turns() const noexcept {
    return std::accumulate(strategy_counts.begin(), strategy_counts.end(), 0);
}

std::optional<std::string> DialogueState::last_user_text() const {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->speaker == Speaker::User) return it->text;
    }
    return std::nullopt;
}

std::optional<std::string> DialogueState::last_system_text() const {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->speaker == Speaker::System) return it->text;
    }
    return std::nullopt;
}

DialogueState apply_system_turn(const DialogueState& state, StrategyId strategy,
                                const std::string& action_text) {
    const auto cleaned = text::trim(action_text);
    if (cleaned.empty()) throw PreconditionError("system utterance is empty");
    if (!strategy.valid()) throw PreconditionError("strategy id out of range");
    if (state.awaiting_user()) {
        throw PreconditionError("system turn applied while a user reply is pending");
    }
    DialogueState next = state;
    next.history.push_back(Utterance{Speaker::System, cleaned, state.turn});
    next.last_strategy = strategy;
    ++next.strategy_counts[static_cast<std::size_t>(strategy.index())];
    return next;
}

DialogueState apply_user_turn(const DialogueState& state, const std::string& user_text) {
    const auto cleaned = text::trim(user_text);
    if (cleaned.empty()) throw PreconditionError("user utterance is empty");
    DialogueState next = state;
    if (state.history.empty()) {
        next.history.push_back(Utterance{Speaker::User, cleaned, state.turn});
        return next;
    }
    if (!state.awaiting_user()) {
        throw PreconditionError("user turn applied without a preceding system utterance");
    }
    next.history.push_back(Utterance{Speaker::User, cleaned, state.turn});
    ++next.turn;
    return next;
}

DialogueState with_reward(const DialogueState& state, double reward) {
    if (!(reward >= 0.0 && reward <= 1.0)) throw PreconditionError("reward outside [0,1]");
    DialogueState next = state;
    next.last_reward = reward;
    return next;
}

std::string render_transcript(const DialogueState& state) {
    std::string out;
    if (state.pinned_context && !state.pinned_context->empty()) out = *state.pinned_context;
    for (const auto& u : state.history) {
        if (!out.empty()) out += '\n';
        out += u.speaker == Speaker::System ? "SYSTEM: " : "USER: ";
        out += u.text;
    }
    return out;
}

int count_speaker(const DialogueState& state, Speaker speaker) {
    int n = 0;
    for (const auto& u : state.history) n += u.speaker == speaker;
    return n;
}

void Trajectory::validate(int turn_cap) const {
    if (records.empty()) throw PreconditionError("trajectory has no records");
    if (static_cast<int>(records.size()) > turn_cap) {
        throw PreconditionError("trajectory exceeds the turn cap");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.reward >= 0.0 && r.reward <= 1.0)) throw PreconditionError("reward outside [0,1]");
        if (r.strategy_logprob > 0.0) throw PreconditionError("positive strategy log-probability");
        if (r.terminated && i + 1 != records.size()) {
            throw PreconditionError("terminated flag set before the final record");
        }
    }
    if (outcome.accepted() &&
        (!records.back().terminated || outcome.turn != static_cast<int>(records.size()))) {
        throw PreconditionError("accepted outcome does not match the final record");
    }
}

}  // namespace rso
