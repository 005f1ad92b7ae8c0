#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>

namespace rso {

enum class PromptKind { PreferenceReasoner, Actor, Rewarder, UserSimulator, JudgeWI, JudgeCred };

inline constexpr std::array<PromptKind, 6> kAllPromptKinds = {
    PromptKind::PreferenceReasoner, PromptKind::Actor,   PromptKind::Rewarder,
    PromptKind::UserSimulator,      PromptKind::JudgeWI, PromptKind::JudgeCred};

/// File stem under the prompts directory, e.g. "actor" for actor.txt.
std::string_view prompt_file_stem(PromptKind kind);

using PromptInputs = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{name}` placeholders; `{{` / `}}` are literal braces. Throws
/// PreconditionError naming `what` if an input is missing.
std::string render_placeholders(std::string_view body, const PromptInputs& inputs,
                                std::string_view what);

/// Text with `{name}` placeholders; `{{` and `}}` are literal braces.
class PromptTemplate {
public:
    PromptTemplate(PromptKind kind, std::string body);

    PromptKind kind() const noexcept { return kind_; }
    const std::string& body() const noexcept { return body_; }

    /// Throws PreconditionError if a placeholder has no input; extra inputs
    /// are ignored.
    std::string render(const PromptInputs& inputs) const;

private:
    PromptKind kind_;
    std::string body_;
};

class PromptLibrary {
public:
    /// Compiled-in templates, identical to assets/prompts.
    static PromptLibrary defaults();
    /// Loads `<stem>.txt` for every kind; a missing file is a ConfigError.
    static PromptLibrary from_directory(const std::string& dir);

    const PromptTemplate& get(PromptKind kind) const;

private:
    std::map<PromptKind, PromptTemplate> templates_;
};

/// Rubric inserted as {rubric} into the rewarder template.
std::string_view default_reward_rubric();

/// Markers the actor is asked to wrap item names in.
inline constexpr std::string_view kItemOpen = "[[";
inline constexpr std::string_view kItemClose = "]]";

}  // namespace rso
