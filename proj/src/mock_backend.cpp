#include "rso/backend.hpp"

#include <algorithm>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

void CallLog::record(std::string event) {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(event));
}

std::vector<std::string> CallLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

void CallLog::clear() {
    std::lock_guard lock(mu_);
    events_.clear();
}

MockBackend::MockBackend(Responder responder, std::uint64_t seed, std::shared_ptr<CallLog> log)
    : responder_(std::move(responder)), seed_(seed), log_(std::move(log)) {
    if (!responder_) throw PreconditionError("mock backend needs a responder");
}

std::string MockBackend::complete(const ChatRequest& request) {
    std::uint64_t call = 0;
    {
        std::lock_guard lock(mu_);
        call = calls_++;
        if (keep_requests_) requests_.push_back(request);
    }
    if (log_) log_->record(request.expert);
    return responder_(request, seed_, call);
}

std::uint64_t MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

void MockBackend::keep_requests(bool keep) {
    std::lock_guard lock(mu_);
    keep_requests_ = keep;
    if (!keep) requests_.clear();
}

std::vector<ChatRequest> MockBackend::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

namespace mock {

namespace {

std::string full_prompt(const ChatRequest& r) {
    std::string out;
    for (const auto& m : r.messages) out += m.content + "\n";
    return out;
}

bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase,
                     std::size_t* at) {
    if (phrase.empty() || phrase.size() > tokens.size()) return false;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
            *at = i;
            return true;
        }
    }
    return false;
}

}  // namespace

MockBackend::Responder constant(std::string reply) {
    return [reply = std::move(reply)](const ChatRequest&, std::uint64_t, std::uint64_t) { return reply; };
}

MockBackend::Responder sequence(std::vector<std::string> replies) {
    if (replies.empty()) throw PreconditionError("sequence mock needs at least one reply");
    return [replies = std::move(replies)](const ChatRequest&, std::uint64_t, std::uint64_t call) {
        return replies[std::min<std::size_t>(call, replies.size() - 1)];
    };
}

MockBackend::Responder rules(std::string field, std::vector<Rule> rule_list, std::string fallback) {
    return [field = std::move(field), rule_list = std::move(rule_list),
            fallback = std::move(fallback)](const ChatRequest& r, std::uint64_t, std::uint64_t) {
        std::string haystack;
        if (field.empty()) {
            haystack = full_prompt(r);
        } else if (auto it = r.inputs.find(field); it != r.inputs.end()) {
            haystack = it->second;
        }
        for (const auto& rule : rule_list) {
            if (text::icontains(haystack, rule.contains)) return rule.reply;
        }
        return fallback;
    };
}

MockBackend::Responder templated(std::string format) {
    return [format = std::move(format)](const ChatRequest& r, std::uint64_t, std::uint64_t) {
        PromptInputs inputs = r.inputs;
        std::string top;
        if (auto it = inputs.find("entities"); it != inputs.end()) {
            top = text::split(it->second, '\n').front();
        }
        inputs.emplace("top_entity", top.empty() ? "a great movie" : top);
        return render_placeholders(format, inputs, "mock reply format");
    };
}

MockBackend::Responder keyword_preference(std::vector<std::string> keywords) {
    return [keywords = std::move(keywords)](const ChatRequest& r, std::uint64_t, std::uint64_t) {
        static const std::vector<std::string> negations = {"not", "no", "t", "hate", "dislike", "never"};
        std::vector<std::string> likes;
        std::vector<std::string> dislikes;
        std::string transcript;
        if (auto it = r.inputs.find("transcript"); it != r.inputs.end()) transcript = it->second;
        for (const auto& line : text::split(transcript, '\n')) {
            if (line.rfind("USER:", 0) != 0) continue;
            const auto tokens = text::tokenize(line.substr(5));
            for (const auto& kw : keywords) {
                std::size_t at = 0;
                if (!contains_phrase(tokens, text::tokenize(kw), &at)) continue;
                bool negated = false;
                for (std::size_t back = 1; back <= 2 && back <= at; ++back) {
                    negated |= std::find(negations.begin(), negations.end(), tokens[at - back]) != negations.end();
                }
                auto& target = negated ? dislikes : likes;
                auto& other = negated ? likes : dislikes;
                other.erase(std::remove(other.begin(), other.end(), kw), other.end());
                if (std::find(target.begin(), target.end(), kw) == target.end()) target.push_back(kw);
            }
        }
        std::string summary;
        if (likes.empty() && dislikes.empty()) {
            summary = "The user has not stated clear preferences yet.";
        } else {
            if (!likes.empty()) summary += "The user likes " + text::join(likes, ", ") + ".";
            if (!dislikes.empty()) {
                summary += (summary.empty() ? "" : " ") + std::string("The user dislikes ") +
                           text::join(dislikes, ", ") + ".";
            }
        }
        return "SUMMARY: " + summary + "\nLIKES: " + (likes.empty() ? "none" : text::join(likes, ", ")) +
               "\nDISLIKES: " + (dislikes.empty() ? "none" : text::join(dislikes, ", ")) + "\nHINTS: none\n";
    };
}

MockBackend::Responder random_score(int lo, int hi) {
    if (lo > hi) throw PreconditionError("random_score range is empty");
    return [lo, hi](const ChatRequest& r, std::uint64_t seed, std::uint64_t) {
        std::uint64_t h = text::fnv1a(std::to_string(seed));
        h = text::fnv1a(full_prompt(r), h);
        h = text::fnv1a(std::to_string(r.sample_index), h);
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return std::to_string(lo + static_cast<int>(h % span));
    };
}

MockBackend::Responder echo() {
    return [](const ChatRequest& r, std::uint64_t, std::uint64_t) {
        return r.messages.empty() ? std::string() : r.messages.back().content;
    };
}

namespace {

std::uint64_t prompt_hash(const ChatRequest& r, std::uint64_t seed) {
    std::uint64_t h = text::fnv1a(std::to_string(seed));
    h = text::fnv1a(full_prompt(r), h);
    return text::fnv1a(std::to_string(r.sample_index), h);
}

/// Last line of `transcript` starting with `prefix`, without the prefix.
std::string last_line(const std::string& transcript, std::string_view prefix) {
    std::string found;
    for (const auto& line : text::split(transcript, '\n')) {
        if (line.rfind(prefix, 0) == 0) found = line.substr(prefix.size());
    }
    return found;
}

std::string input(const ChatRequest& r, const char* key) {
    const auto it = r.inputs.find(key);
    return it == r.inputs.end() ? std::string() : it->second;
}

}  // namespace

MockBackend::Responder persona_user(int accept_one_in) {
    if (accept_one_in < 1) throw PreconditionError("persona_user needs accept_one_in >= 1");
    return [accept_one_in](const ChatRequest& r, std::uint64_t seed, std::uint64_t) {
        static const std::vector<std::string> phrases = {
            "I usually like something funny but not silly.",
            "Maybe a thriller, I love suspense.",
            "I am not into horror at all.",
            "Something with a great soundtrack would be nice.",
            "I watched a lot of science fiction lately.",
            "Could you tell me more about it?",
            "Hmm, I am not sure that is for me.",
            "I prefer older classics, honestly.",
        };
        const auto system = last_line(input(r, "transcript"), "SYSTEM: ");
        const auto target = input(r, "target_item");
        const auto h = prompt_hash(r, seed);
        if (!target.empty() && !system.empty() && text::icontains(system, target)) {
            return "That sounds perfect, I will watch " + target + "!";
        }
        const auto open = system.find("[[");
        const auto close = open == std::string::npos ? open : system.find("]]", open);
        if (close != std::string::npos && h % static_cast<std::uint64_t>(accept_one_in) == 0) {
            return "Okay, I will watch " + system.substr(open + 2, close - open - 2) + ".";
        }
        return phrases[(h >> 8) % phrases.size()];
    };
}

MockBackend::Responder acceptance_judge(int lo, int hi) {
    if (lo > hi) throw PreconditionError("acceptance_judge range is empty");
    return [lo, hi](const ChatRequest& r, std::uint64_t seed, std::uint64_t) {
        const auto user = last_line(input(r, "transcript"), "USER: ");
        if (text::icontains(user, "will watch")) return std::string("5");
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return std::to_string(lo + static_cast<int>(prompt_hash(r, seed) % span));
    };
}

}  // namespace mock
}  // namespace rso
