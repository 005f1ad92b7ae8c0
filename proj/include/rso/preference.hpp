#pragma once

#include <string>
#include <vector>

namespace rso {

/// Textual user-preference context produced by the preference reasoner.
struct PreferenceSummary {
    std::string text;
    std::vector<std::string> liked_aspects;
    std::vector<std::string> disliked_aspects;
    std::vector<std::string> candidate_hints;
    /// Set when the reply could not be parsed and `text` holds it verbatim.
    bool parse_warning = false;

    friend bool operator==(const PreferenceSummary&, const PreferenceSummary&) = default;
};

/// Parses the labeled-section reply format:
///
///   SUMMARY: <free text, may continue on following lines>
///   LIKES: a, b
///   DISLIKES: c
///   HINTS: d; e
///
/// List sections accept comma/semicolon separated items or "- item" lines.
/// Returns false when no SUMMARY section is present.
bool parse_preference_reply(const std::string& reply, PreferenceSummary& out);

std::string format_preference_reply(const PreferenceSummary& pref);

/// Compact rendering used inside prompts.
std::string render_preference(const PreferenceSummary& pref);

}  // namespace rso
