#include "rso/experts.hpp"

#include <cctype>
#include <future>
#include <numeric>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

namespace {

ChatRequest make_request(const char* expert, std::string prompt, PromptInputs inputs) {
    ChatRequest r;
    r.expert = expert;
    r.messages.push_back({"user", std::move(prompt)});
    r.inputs = std::move(inputs);
    return r;
}

std::string call(ExpertBackend& backend, const ChatRequest& request, int turn) {
    try {
        return backend.complete(request);
    } catch (const ExpertUnavailable& e) {
        throw ExpertError(request.expert, turn, e.what());
    }
}

/// Runs `samples` scoring calls and returns the parsed scores; throws when
/// more than half fail to parse.
std::vector<double> sample_scores(ExpertBackend& backend, const ChatRequest& base, int samples, int turn) {
    if (samples < 1) throw PreconditionError("samples must be >= 1");
    std::vector<std::string> replies(static_cast<std::size_t>(samples));
    auto one = [&](int i) {
        ChatRequest r = base;
        r.sample_index = i;
        return call(backend, r, turn);
    };
    if (backend.concurrent() && samples > 1) {
        std::vector<std::future<std::string>> futures;
        for (int i = 0; i < samples; ++i) futures.push_back(std::async(std::launch::async, one, i));
        for (int i = 0; i < samples; ++i) replies[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i)].get();
    } else {
        for (int i = 0; i < samples; ++i) replies[static_cast<std::size_t>(i)] = one(i);
    }
    std::vector<double> scores;
    for (const auto& reply : replies) {
        if (auto s = parse_score(reply)) scores.push_back(*s);
    }
    const int failed = samples - static_cast<int>(scores.size());
    if (failed * 2 > samples) {
        throw ExpertError(base.expert, turn,
                          std::to_string(failed) + " of " + std::to_string(samples) +
                              " judge replies had no score in [1,5]");
    }
    return scores;
}

}  // namespace

RewardSignal make_reward_signal(std::vector<double> raw_scores, double tau) {
    if (raw_scores.empty()) throw PreconditionError("reward needs at least one score");
    if (!(tau >= 0.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [0,1]");
    RewardSignal s;
    for (auto& x : raw_scores) x = std::clamp(x, 1.0, 5.0);
    s.mean_raw = std::accumulate(raw_scores.begin(), raw_scores.end(), 0.0) /
                 static_cast<double>(raw_scores.size());
    s.normalized = (s.mean_raw - 1.0) / 4.0;
    s.terminate = s.normalized > tau;
    s.raw_scores = std::move(raw_scores);
    return s;
}

std::optional<double> parse_score(std::string_view reply) {
    const auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80;
    };
    std::size_t i = 0;
    while (i < reply.size()) {
        if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
        if (i + 1 < reply.size() && reply[i] == '.' && std::isdigit(static_cast<unsigned char>(reply[i + 1]))) {
            ++i;
            while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
        }
        const bool glued_before =
            start > 0 && (is_word(reply[start - 1]) || reply[start - 1] == '.' || reply[start - 1] == '-');
        const bool glued_after = i < reply.size() && (is_word(reply[i]) ||
                                 (reply[i] == '.' && i + 1 < reply.size() &&
                                  std::isdigit(static_cast<unsigned char>(reply[i + 1]))));
        if (glued_before || glued_after) continue;
        const double value = std::stod(std::string(reply.substr(start, i - start)));
        if (value >= 1.0 && value <= 5.0) return value;
    }
    return std::nullopt;
}

std::string cap_utf8(std::string s, std::size_t limit) {
    if (s.size() <= limit) return s;
    std::size_t cut = limit;
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    s.resize(cut);
    return text::trim(s);
}

PreferenceSummary infer_preference(ExpertBackend& backend, const PromptLibrary& prompts,
                                   const DialogueState& state) {
    if (count_speaker(state, Speaker::User) == 0) {
        throw PreconditionError("preference inference needs at least one user utterance");
    }
    const auto transcript = render_transcript(state);
    PromptInputs inputs{{"transcript", transcript}};
    const auto prompt = prompts.get(PromptKind::PreferenceReasoner).render(inputs);
    const auto reply = call(backend, make_request(expert_name::kPreference, prompt, inputs), state.turn);
    PreferenceSummary pref;
    if (parse_preference_reply(reply, pref)) return pref;
    pref = PreferenceSummary{};
    pref.text = text::trim(reply);
    pref.parse_warning = true;
    if (pref.text.empty()) throw ExpertError(expert_name::kPreference, state.turn, "empty reply");
    return pref;
}

std::string generate_response(ExpertBackend& backend, const PromptLibrary& prompts,
                              const StrategyDef& strategy, const PreferenceSummary& pref,
                              const FactBundle& facts, const DialogueState& state,
                              std::size_t char_limit) {
    std::string entities;
    for (const auto& e : facts.entities) entities += (entities.empty() ? "" : "\n") + e.name;
    PromptInputs inputs{
        {"transcript", render_transcript(state)},
        {"strategy_name", strategy.name},
        {"strategy_instruction", strategy.instruction},
        {"preference", pref.text.empty() ? "(none yet)" : render_preference(pref)},
        {"facts", facts.rendered.empty() ? "(no facts retrieved)" : facts.rendered},
        {"entities", entities},
    };
    const auto prompt = prompts.get(PromptKind::Actor).render(inputs);
    const auto request = make_request(expert_name::kActor, prompt, inputs);
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = text::trim(call(backend, request, state.turn));
        if (!reply.empty()) return cap_utf8(std::move(reply), char_limit);
    }
    throw ExpertError(expert_name::kActor, state.turn, "empty reply after retry");
}

RewardSignal score_turn(ExpertBackend& backend, const PromptLibrary& prompts,
                        const DialogueState& next_state, int samples, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [0,1]");
    PromptInputs inputs{
        {"transcript", render_transcript(next_state)},
        {"rubric", std::string(default_reward_rubric())},
        {"last_system", next_state.last_system_text().value_or("")},
    };
    const auto prompt = prompts.get(PromptKind::Rewarder).render(inputs);
    auto scores = sample_scores(backend, make_request(expert_name::kRewarder, prompt, inputs), samples,
                                next_state.turn);
    return make_reward_signal(std::move(scores), tau);
}

std::string simulate_user_reply(ExpertBackend& backend, const PromptLibrary& prompts,
                                const DialogueState& state, const std::string& persona,
                                const std::optional<std::string>& target_item,
                                std::size_t char_limit) {
    PromptInputs inputs{
        {"transcript", render_transcript(state)},
        {"persona", persona.empty() ? "(no particular persona)" : persona},
        {"target_item", target_item.value_or("(no particular movie)")},
    };
    const auto prompt = prompts.get(PromptKind::UserSimulator).render(inputs);
    const auto request = make_request(expert_name::kUser, prompt, inputs);
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = text::trim(call(backend, request, state.turn));
        if (!reply.empty()) return cap_utf8(std::move(reply), char_limit);
    }
    throw ExpertError(expert_name::kUser, state.turn, "empty reply after retry");
}

double judge_metric(ExpertBackend& backend, const PromptLibrary& prompts, PromptKind kind,
                    const std::string& transcript, int samples, const std::string& facts) {
    if (kind != PromptKind::JudgeWI && kind != PromptKind::JudgeCred) {
        throw PreconditionError("judge_metric needs the JudgeWI or JudgeCred template");
    }
    PromptInputs inputs{{"transcript", transcript}, {"facts", facts.empty() ? "(none)" : facts}};
    const auto prompt = prompts.get(kind).render(inputs);
    const char* name = kind == PromptKind::JudgeWI ? expert_name::kJudgeWI : expert_name::kJudgeCred;
    const auto scores = sample_scores(backend, make_request(name, prompt, inputs), samples, 0);
    double sum = 0.0;
    for (double s : scores) sum += std::clamp(s, 1.0, 5.0);
    return sum / static_cast<double>(scores.size());
}

}  // namespace rso
