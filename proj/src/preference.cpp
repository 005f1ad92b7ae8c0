#include "rso/preference.hpp"

#include <optional>

#include "rso/text.hpp"

namespace rso {

namespace {

enum class Section { None, Summary, Likes, Dislikes, Hints };

std::optional<std::pair<Section, std::string>> section_header(const std::string& line) {
    static const std::pair<const char*, Section> labels[] = {
        {"summary", Section::Summary},
        {"likes", Section::Likes},
        {"dislikes", Section::Dislikes},
        {"hints", Section::Hints},
    };
    const auto colon = line.find(':');
    if (colon == std::string::npos) return std::nullopt;
    const auto label = text::to_lower(text::trim(std::string_view(line).substr(0, colon)));
    for (const auto& [name, section] : labels) {
        if (label == name) return std::make_pair(section, text::trim(std::string_view(line).substr(colon + 1)));
    }
    return std::nullopt;
}

void add_items(std::vector<std::string>& list, const std::string& body) {
    std::string cleaned = body;
    if (!cleaned.empty() && (cleaned.front() == '-' || cleaned.front() == '*')) cleaned.erase(0, 1);
    for (char& c : cleaned) {
        if (c == ';') c = ',';
    }
    for (const auto& part : text::split(cleaned, ',')) {
        const auto item = text::trim(part);
        const auto lower = text::to_lower(item);
        if (item.empty() || lower == "none" || lower == "n/a" || lower == "-") continue;
        list.push_back(item);
    }
}

}  // namespace

bool parse_preference_reply(const std::string& reply, PreferenceSummary& out) {
    PreferenceSummary result;
    Section current = Section::None;
    bool saw_summary = false;
    for (const auto& raw : text::split(reply, '\n')) {
        const auto line = text::trim(raw);
        if (line.empty()) continue;
        if (auto header = section_header(line)) {
            current = header->first;
            if (current == Section::Summary) {
                saw_summary = true;
                result.text = header->second;
                continue;
            }
            if (!header->second.empty()) {
                auto& list = current == Section::Likes      ? result.liked_aspects
                             : current == Section::Dislikes ? result.disliked_aspects
                                                            : result.candidate_hints;
                add_items(list, header->second);
            }
            continue;
        }
        switch (current) {
            case Section::Summary:
                result.text += result.text.empty() ? line : " " + line;
                break;
            case Section::Likes: add_items(result.liked_aspects, line); break;
            case Section::Dislikes: add_items(result.disliked_aspects, line); break;
            case Section::Hints: add_items(result.candidate_hints, line); break;
            case Section::None: break;
        }
    }
    if (!saw_summary || text::trim(result.text).empty()) return false;
    out = std::move(result);
    return true;
}

std::string format_preference_reply(const PreferenceSummary& pref) {
    std::string out = "SUMMARY: " + pref.text + "\n";
    out += "LIKES: " + text::join(pref.liked_aspects, ", ") + "\n";
    out += "DISLIKES: " + text::join(pref.disliked_aspects, ", ") + "\n";
    out += "HINTS: " + text::join(pref.candidate_hints, ", ") + "\n";
    return out;
}

std::string render_preference(const PreferenceSummary& pref) {
    std::string out = pref.text;
    if (!pref.liked_aspects.empty()) out += "\nLikes: " + text::join(pref.liked_aspects, ", ");
    if (!pref.disliked_aspects.empty()) out += "\nDislikes: " + text::join(pref.disliked_aspects, ", ");
    if (!pref.candidate_hints.empty()) out += "\nCandidate hints: " + text::join(pref.candidate_hints, ", ");
    return out;
}

}  // namespace rso
