#include "rso/prompts.hpp"

#include <fstream>
#include <sstream>

#include "rso/error.hpp"

namespace rso {

std::string_view prompt_file_stem(PromptKind kind) {
    switch (kind) {
        case PromptKind::PreferenceReasoner: return "preference_reasoner";
        case PromptKind::Actor: return "actor";
        case PromptKind::Rewarder: return "rewarder";
        case PromptKind::UserSimulator: return "user_simulator";
        case PromptKind::JudgeWI: return "judge_wi";
        case PromptKind::JudgeCred: return "judge_cred";
    }
    return "unknown";
}

PromptTemplate::PromptTemplate(PromptKind kind, std::string body) : kind_(kind), body_(std::move(body)) {}

std::string render_placeholders(std::string_view body, const PromptInputs& inputs,
                                std::string_view what) {
    std::string out;
    out.reserve(body.size() * 2);
    for (std::size_t i = 0; i < body.size();) {
        const char c = body[i];
        if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
            out += '{';
            i += 2;
        } else if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
            out += '}';
            i += 2;
        } else if (c == '{') {
            const auto close = body.find('}', i);
            if (close == std::string_view::npos) {
                throw PreconditionError("unterminated placeholder in " + std::string(what));
            }
            const auto name = body.substr(i + 1, close - i - 1);
            const auto it = inputs.find(name);
            if (it == inputs.end()) {
                throw PreconditionError(std::string(what) + " references missing input {" +
                                        std::string(name) + "}");
            }
            out += it->second;
            i = close + 1;
        } else {
            out += c;
            ++i;
        }
    }
    return out;
}

std::string PromptTemplate::render(const PromptInputs& inputs) const {
    return render_placeholders(body_, inputs, std::string(prompt_file_stem(kind_)) + " template");
}

namespace {

const char* default_body(PromptKind kind) {
    switch (kind) {
        case PromptKind::PreferenceReasoner:
            return R"(You analyse the preferences of a user talking to a movie recommender.
Read the whole conversation, not only the last message, and infer what the user wants,
including preferences that are only implied.

Conversation:
{transcript}

Answer in exactly this format:
SUMMARY: <one or two sentences describing the user's current preferences>
LIKES: <comma-separated aspects the user likes, or none>
DISLIKES: <comma-separated aspects the user dislikes, or none>
HINTS: <comma-separated candidate titles or search hints, or none>
)";
        case PromptKind::Actor:
            return R"(You are a friendly movie recommender chatting with a user.

Conversation so far:
{transcript}

Strategy for your next message: {strategy_name}
{strategy_instruction}

What we know about the user's preferences:
{preference}

Facts you may rely on (do not contradict them, do not invent titles):
{facts}

Write only your next message to the user, in one short paragraph. Follow the strategy.
Wrap every movie title you mention in double square brackets, like [[Title]].
)";
        case PromptKind::Rewarder:
            return R"(You judge a conversation between a movie recommender (SYSTEM) and a user (USER).

Conversation:
{transcript}

{rubric}
)";
        case PromptKind::UserSimulator:
            return R"(You play a person looking for a movie recommendation.
Persona: {persona}
The movie you would actually enjoy (never name it first): {target_item}

Conversation so far:
{transcript}

Reply with your next message only, one or two sentences, in character.
If the recommender suggests a movie you would enjoy, say clearly that you will watch it.
)";
        case PromptKind::JudgeWI:
            return R"(You evaluate a conversation between a movie recommender (SYSTEM) and a user (USER).

Conversation:
{transcript}

Additional information about the recommended movie:
{facts}

How willing is the user to watch the recommended movie after this conversation?
Answer with a single integer from 1 (not at all) to 5 (certainly), then a short reason.
)";
        case PromptKind::JudgeCred:
            return R"(You evaluate the credibility of a movie recommender (SYSTEM).

Reference facts:
{facts}

Conversation:
{transcript}

How consistent are the recommender's statements with the reference facts?
Answer with a single integer from 1 (contradicts or invents facts) to 5 (fully consistent),
then a short reason.
)";
    }
    return "";
}

}  // namespace

std::string_view default_reward_rubric() {
    return "Rate the user satisfaction and task success achieved by the recommender's latest message.\n"
           "Answer with a single integer from 1 (very poor) to 5 (excellent), then a short reason.";
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    for (auto kind : kAllPromptKinds) lib.templates_.emplace(kind, PromptTemplate(kind, default_body(kind)));
    return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::string& dir) {
    PromptLibrary lib;
    for (auto kind : kAllPromptKinds) {
        const auto path = dir + "/" + std::string(prompt_file_stem(kind)) + ".txt";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("paths.prompts", "missing prompt template " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        lib.templates_.emplace(kind, PromptTemplate(kind, buf.str()));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(PromptKind kind) const {
    const auto it = templates_.find(kind);
    if (it == templates_.end()) {
        throw ConfigError("paths.prompts", "no template loaded for " + std::string(prompt_file_stem(kind)));
    }
    return it->second;
}

}  // namespace rso
