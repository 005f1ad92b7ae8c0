#include "rso/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "rso/error.hpp"
#include "rso/experts.hpp"
#include "rso/text.hpp"

namespace rso {

IntentionTriple::IntentionTriple(double i_pre, double i_post, double i_true)
    : pre_(i_pre), post_(i_post), true_(i_true) {
    if (!(i_true >= i_post)) throw PreconditionError("intention triple needs i_true >= i_post");
}

double persuasiveness(const IntentionTriple& t) {
    if (!(t.i_true() >= t.i_post())) throw PreconditionError("intention triple needs i_true >= i_post");
    const double denom = t.i_true() - t.i_pre();
    if (denom == 0.0) return 1.0;
    return std::clamp(1.0 - (t.i_true() - t.i_post()) / denom, 0.0, 1.0);
}

double distinct_2(const std::vector<std::string>& utterances) {
    std::set<std::pair<std::string, std::string>> unique;
    std::size_t total = 0;
    for (const auto& u : utterances) {
        const auto tokens = text::tokenize(u);
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            unique.emplace(tokens[i - 1], tokens[i]);
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

int recall_at_k(const std::vector<std::string>& ranked, const std::string& gold, int k) {
    if (k < 1) throw PreconditionError("recall needs k >= 1");
    const auto n = std::min(ranked.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        if (text::iequals(text::trim(ranked[i]), text::trim(gold))) return 1;
    }
    return 0;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

MetricsReport aggregate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw PreconditionError("cannot aggregate zero records");
    MetricsReport r;
    r.n = static_cast<int>(records.size());
    std::vector<double> r1, r5, wi, prs, cred;
    std::vector<std::string> utterances;
    double accepted = 0.0;
    double recommended = 0.0;
    for (const auto& rec : records) {
        accepted += rec.accepted ? 1.0 : 0.0;
        if (rec.gold_item) {
            const auto& items = rec.recommended_items;
            recommended += recall_at_k(items, *rec.gold_item, std::max<int>(1, static_cast<int>(items.size())));
            r1.push_back(recall_at_k(items, *rec.gold_item, 1));
            r5.push_back(recall_at_k(items, *rec.gold_item, 5));
        }
        if (rec.wi) wi.push_back(*rec.wi);
        if (rec.prs) prs.push_back(*rec.prs);
        if (rec.cred) cred.push_back(*rec.cred);
        utterances.insert(utterances.end(), rec.system_utterances.begin(), rec.system_utterances.end());
    }
    r.conv_sr = accepted / r.n;
    r.rec_sr = recommended / r.n;
    r.recall_at_1 = mean_of(r1);
    r.recall_at_5 = mean_of(r5);
    r.wi_mean = mean_of(wi);
    r.prs_mean = mean_of(prs);
    r.cred_mean = mean_of(cred);
    r.dist2 = distinct_2(utterances);
    return r;
}

// ---------------------------------------------------------------- judges

double judge_watching_intention(ExpertBackend& backend, const PromptLibrary& prompts,
                                const std::string& transcript, int samples) {
    return judge_metric(backend, prompts, PromptKind::JudgeWI, transcript, samples);
}

double judge_credibility(ExpertBackend& backend, const PromptLibrary& prompts, const std::string& transcript,
                         const FactBundle& facts, int samples) {
    return judge_metric(backend, prompts, PromptKind::JudgeCred, transcript, samples, facts.rendered);
}

DialogueState pre_recommendation_prefix(const DialogueState& state, const std::string& item) {
    auto out = state;
    const auto& h = state.history;
    std::size_t cut = h.size();
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i].speaker == Speaker::System && text::icontains(h[i].text, item)) {
            cut = i;
            break;
        }
    }
    if (cut == h.size()) {
        // no mention: the first system turn and the reply to it
        cut = 0;
        bool seen_system = false;
        while (cut < h.size()) {
            const auto speaker = h[cut++].speaker;
            if (speaker == Speaker::System) seen_system = true;
            if (seen_system && speaker == Speaker::User) break;
        }
    }
    out.history.resize(cut);
    return out;
}

IntentionTriple measure_intentions(ExpertBackend& backend, const PromptLibrary& prompts,
                                   const DialogueState& state, const std::string& item,
                                   const FactBundle& item_info, int samples) {
    if (item_info.rendered.empty()) throw PreconditionError("i_true needs the recommended item's information");
    const auto prefix = render_transcript(pre_recommendation_prefix(state, item));
    const auto full = render_transcript(state);
    const double pre = judge_metric(backend, prompts, PromptKind::JudgeWI,
                                    prefix.empty() ? "(the conversation has not started)" : prefix, samples);
    const double post = judge_metric(backend, prompts, PromptKind::JudgeWI, full, samples);
    const double truth = judge_metric(backend, prompts, PromptKind::JudgeWI, full, samples, item_info.rendered);
    return IntentionTriple(pre, post, std::max(truth, post));
}

// ---------------------------------------------------------------- items

std::vector<std::string> marked_items(const std::string& utterance) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = utterance.find(kItemOpen, pos)) != std::string::npos) {
        const auto start = pos + kItemOpen.size();
        const auto end = utterance.find(kItemClose, start);
        if (end == std::string::npos) break;
        auto name = text::trim(utterance.substr(start, end - start));
        if (!name.empty()) out.push_back(std::move(name));
        pos = end + kItemClose.size();
    }
    return out;
}

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80; }

/// Byte offset of the last whole-word, case-insensitive occurrence of `name`.
std::optional<std::size_t> last_word_match(const std::string& lowered, const std::string& name) {
    const auto needle = text::to_lower(name);
    if (needle.empty()) return std::nullopt;
    std::optional<std::size_t> found;
    for (auto at = lowered.find(needle); at != std::string::npos; at = lowered.find(needle, at + 1)) {
        const auto end = at + needle.size();
        const bool left = at == 0 || !word_char(lowered[at - 1]);
        const bool right = end == lowered.size() || !word_char(lowered[end]);
        if (left && right) found = at;
    }
    return found;
}

}  // namespace

std::vector<std::string> recommended_items(const DialogueState& state, const EntityIndex* index) {
    // key: lowercase name -> (display name, (utterance, position) of the latest mention)
    std::map<std::string, std::pair<std::string, std::pair<std::size_t, std::size_t>>> latest;
    const auto note = [&](const std::string& name, std::size_t utt, std::size_t pos) {
        auto& slot = latest[text::to_lower(name)];
        if (slot.first.empty() || std::make_pair(utt, pos) >= slot.second) slot = {name, {utt, pos}};
    };
    const auto& h = state.history;
    for (std::size_t u = 0; u < h.size(); ++u) {
        if (h[u].speaker != Speaker::System) continue;
        const auto items = marked_items(h[u].text);
        for (std::size_t p = 0; p < items.size(); ++p) note(items[p], u, p);
    }
    if (latest.empty() && index) {
        for (std::size_t u = 0; u < h.size(); ++u) {
            if (h[u].speaker != Speaker::System) continue;
            const auto lowered = text::to_lower(h[u].text);
            for (const auto& e : index->entries()) {
                if (auto pos = last_word_match(lowered, e.name)) note(e.name, u, *pos);
            }
        }
    }
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> ordered;
    for (const auto& [key, slot] : latest) ordered.push_back({slot.second, slot.first});
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& o : ordered) out.push_back(std::move(o.second));
    return out;
}

}  // namespace rso
