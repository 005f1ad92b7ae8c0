#include "rso/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "rso/error.hpp"
#include "rso/rng.hpp"
#include "rso/text.hpp"

namespace rso {

using nlohmann::json;

std::optional<CorpusSchema> parse_schema(std::string_view name) {
    const auto n = normalize_label(name);
    if (n == "inspired" || n == "inspired like") return CorpusSchema::InspiredLike;
    if (n == "redial" || n == "redial like") return CorpusSchema::RedialLike;
    if (n == "normalized" || n == "jsonl") return CorpusSchema::Normalized;
    return std::nullopt;
}

std::string_view schema_name(CorpusSchema schema) {
    switch (schema) {
        case CorpusSchema::InspiredLike: return "inspired";
        case CorpusSchema::RedialLike: return "redial";
        case CorpusSchema::Normalized: return "normalized";
    }
    return "unknown";
}

namespace {

std::optional<CorpusRole> match_role(std::string_view s, const LoaderConfig& config) {
    const auto t = text::trim(std::string(s));
    for (const auto& r : config.recommender_roles) {
        if (text::iequals(t, r)) return CorpusRole::Recommender;
    }
    for (const auto& r : config.seeker_roles) {
        if (text::iequals(t, r)) return CorpusRole::Seeker;
    }
    return std::nullopt;
}

std::string_view role_name(CorpusRole r) { return r == CorpusRole::Recommender ? "recommender" : "seeker"; }

std::vector<std::string> lines_of(std::string_view body) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        auto end = body.find('\n', start);
        if (end == std::string_view::npos) end = body.size();
        auto line = std::string(body.substr(start, end - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        start = end + 1;
    }
    return out;
}

std::string where(std::string_view source, std::size_t line) {
    return std::string(source) + ":" + std::to_string(line);
}

/// Collects turns by dialogue id, keeping first-appearance order.
class Grouper {
public:
    RawDialogue& get(const std::string& id) {
        auto [it, inserted] = index_.emplace(id, dialogues_.size());
        if (inserted) {
            dialogues_.push_back({});
            dialogues_.back().dialogue_id = id;
            orders_.emplace_back();
        }
        return dialogues_[it->second];
    }
    std::vector<long long>& order(const std::string& id) { return orders_[index_.at(id)]; }

    std::vector<RawDialogue> finish() {
        for (std::size_t d = 0; d < dialogues_.size(); ++d) {
            auto& turns = dialogues_[d].turns;
            std::vector<std::size_t> idx(turns.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return orders_[d][a] < orders_[d][b]; });
            std::vector<RawTurn> sorted;
            for (auto i : idx) sorted.push_back(std::move(turns[i]));
            turns = std::move(sorted);
        }
        std::vector<RawDialogue> out;
        for (auto& d : dialogues_) {
            if (!d.turns.empty()) out.push_back(std::move(d));
        }
        return out;
    }

private:
    std::map<std::string, std::size_t> index_;
    std::vector<RawDialogue> dialogues_;
    std::vector<std::vector<long long>> orders_;
};

void skip(LoadResult& r, std::string at, const std::string& reason) {
    ++r.skipped_records;
    r.diagnostics.push_back(std::move(at) + ": " + reason);
}

std::vector<std::string> split_items(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ";") {
        if (c == ';' || c == '|') {
            auto t = text::trim(cur);
            if (!t.empty()) out.push_back(std::move(t));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

// ---------------------------------------------------------------- normalized

LoadResult parse_normalized(std::string_view body, const LoaderConfig& config, std::string_view source) {
    LoadResult r;
    Grouper g;
    std::map<std::string, std::map<long long, bool>> seen;
    const auto lines = lines_of(body);
    bool identified = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (text::trim(lines[ln]).empty()) continue;
        ++r.total_records;
        const auto at = where(source, ln + 1);
        json j = json::parse(lines[ln], nullptr, false);
        if (!identified) {
            if (!j.is_object() || !j.contains("dialogue_id") || !j.contains("text")) {
                throw ParseError(at + ": not a normalized corpus record (expects dialogue_id and text)");
            }
            identified = true;
        }
        if (!j.is_object()) {
            skip(r, at, "not a JSON object");
            continue;
        }
        try {
            const auto id = j.at("dialogue_id").get<std::string>();
            const auto index = j.at("turn_index").get<long long>();
            const auto role = match_role(j.at("role").get<std::string>(), config);
            if (!role) {
                skip(r, at, "unknown role '" + j.at("role").get<std::string>() + "'");
                continue;
            }
            RawTurn t;
            t.role = *role;
            t.text = text::trim(j.at("text").get<std::string>());
            if (t.text.empty()) {
                skip(r, at, "empty text");
                continue;
            }
            if (index < 0) {
                skip(r, at, "negative turn_index");
                continue;
            }
            if (seen[id][index]) {
                skip(r, at, "duplicate turn_index " + std::to_string(index));
                continue;
            }
            if (j.contains("strategy") && !j["strategy"].is_null()) t.strategy = j["strategy"].get<std::string>();
            if (j.contains("items") && !j["items"].is_null()) t.items = j["items"].get<std::vector<std::string>>();
            std::optional<std::string> gold;
            if (j.contains("gold_item") && !j["gold_item"].is_null()) gold = j["gold_item"].get<std::string>();
            seen[id][index] = true;
            auto& d = g.get(id);
            if (gold && !d.gold_item) d.gold_item = gold;
            d.turns.push_back(std::move(t));
            g.order(id).push_back(index);
        } catch (const json::exception& e) {
            skip(r, at, std::string("bad field: ") + e.what());
        }
    }
    r.dialogues = g.finish();
    return r;
}

// ---------------------------------------------------------------- inspired-like TSV

LoadResult parse_inspired(std::string_view body, const LoaderConfig& config, std::string_view source) {
    LoadResult r;
    Grouper g;
    const auto lines = lines_of(body);
    std::size_t ln = 0;
    while (ln < lines.size() && text::trim(lines[ln]).empty()) ++ln;
    if (ln == lines.size()) return r;

    const auto header = text::split(lines[ln], '\t');
    const auto column = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            for (const char* n : names) {
                if (text::iequals(text::trim(header[i]), n)) return i;
            }
        }
        return std::nullopt;
    };
    const auto c_id = column({"dialog_id", "dialogue_id"});
    const auto c_role = column({"speaker", "role"});
    const auto c_text = column({"text"});
    if (!c_id || !c_role || !c_text) {
        throw ParseError(where(source, ln + 1) + ": TSV header needs dialog_id, speaker and text columns");
    }
    const auto c_order = column({"utt_id", "turn_index", "turn_id"});
    const auto c_label = column({"expert_label", "strategy", "label"});
    const auto c_items = column({"movies", "items"});
    const auto c_gold = column({"gold_item"});

    long long row = 0;
    for (++ln; ln < lines.size(); ++ln) {
        if (text::trim(lines[ln]).empty()) continue;
        ++r.total_records;
        const auto at = where(source, ln + 1);
        const auto cells = text::split(lines[ln], '\t');
        if (cells.size() != header.size()) {
            skip(r, at, "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
            continue;
        }
        const auto role = match_role(cells[*c_role], config);
        if (!role) {
            skip(r, at, "unknown role '" + cells[*c_role] + "'");
            continue;
        }
        RawTurn t;
        t.role = *role;
        t.text = text::trim(cells[*c_text]);
        if (t.text.empty()) {
            skip(r, at, "empty text");
            continue;
        }
        long long order = row++;
        if (c_order) {
            try {
                order = std::stoll(cells[*c_order]);
            } catch (const std::exception&) {
                skip(r, at, "non-numeric " + header[*c_order]);
                continue;
            }
        }
        if (c_label) {
            const auto label = text::trim(cells[*c_label]);
            if (!label.empty() && !text::iequals(label, "none") && !text::iequals(label, "nan")) t.strategy = label;
        }
        if (c_items) t.items = split_items(cells[*c_items]);
        const auto id = text::trim(cells[*c_id]);
        auto& d = g.get(id);
        if (c_gold && !d.gold_item) {
            const auto gold = text::trim(cells[*c_gold]);
            if (!gold.empty()) d.gold_item = gold;
        }
        d.turns.push_back(std::move(t));
        g.order(id).push_back(order);
    }
    r.dialogues = g.finish();
    return r;
}

// ---------------------------------------------------------------- redial-like JSONL

std::string id_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

LoadResult parse_redial(std::string_view body, std::string_view source) {
    LoadResult r;
    const auto lines = lines_of(body);
    static const std::regex mention(R"(@(\d+))");
    bool identified = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (text::trim(lines[ln]).empty()) continue;
        ++r.total_records;
        const auto at = where(source, ln + 1);
        json j = json::parse(lines[ln], nullptr, false);
        if (!identified) {
            if (!j.is_object() || !j.contains("messages")) {
                throw ParseError(at + ": not a ReDial-style record (expects messages)");
            }
            identified = true;
        }
        try {
            RawDialogue d;
            d.dialogue_id = id_string(j.at("conversationId"));
            const auto initiator = id_string(j.at("initiatorWorkerId"));
            const auto respondent = id_string(j.at("respondentWorkerId"));
            std::map<std::string, std::string> names;
            if (j.contains("movieMentions") && j["movieMentions"].is_object()) {
                for (const auto& [k, v] : j["movieMentions"].items()) {
                    if (v.is_string()) names[k] = text::trim(v.get<std::string>());
                }
            }
            std::string bad;
            std::map<std::string, std::size_t> last_recommended;
            for (const auto& m : j.at("messages")) {
                const auto sender = id_string(m.at("senderWorkerId"));
                RawTurn t;
                if (sender == initiator) {
                    t.role = CorpusRole::Seeker;
                } else if (sender == respondent) {
                    t.role = CorpusRole::Recommender;
                } else {
                    bad = "unknown sender " + sender;
                    break;
                }
                const auto raw = m.at("text").get<std::string>();
                std::string out;
                std::size_t last = 0;
                for (auto it = std::sregex_iterator(raw.begin(), raw.end(), mention); it != std::sregex_iterator(); ++it) {
                    const auto& match = *it;
                    out += raw.substr(last, static_cast<std::size_t>(match.position()) - last);
                    const auto found = names.find(match[1].str());
                    if (found != names.end()) {
                        out += found->second;
                        t.items.push_back(found->second);
                        if (t.role == CorpusRole::Recommender) last_recommended[match[1].str()] = d.turns.size();
                    } else {
                        out += match.str();
                    }
                    last = static_cast<std::size_t>(match.position() + match.length());
                }
                out += raw.substr(last);
                t.text = text::trim(out);
                if (t.text.empty()) continue;
                d.turns.push_back(std::move(t));
            }
            if (!bad.empty()) {
                skip(r, at, bad);
                continue;
            }
            if (d.turns.empty()) {
                skip(r, at, "no messages");
                continue;
            }
            // gold: a movie the recommender suggested and the seeker liked,
            // latest recommender mention first
            if (j.contains("initiatorQuestions") && j["initiatorQuestions"].is_object()) {
                std::optional<std::pair<std::size_t, std::string>> best;
                for (const auto& [k, q] : j["initiatorQuestions"].items()) {
                    if (!q.is_object()) continue;
                    const bool suggested = q.value("suggested", 0) == 1;
                    const bool liked = q.value("liked", 0) == 1;
                    const auto pos = last_recommended.find(k);
                    if (!suggested || !liked || pos == last_recommended.end() || !names.count(k)) continue;
                    if (!best || pos->second > best->first) best = std::make_pair(pos->second, names[k]);
                }
                if (best) d.gold_item = best->second;
            }
            r.dialogues.push_back(std::move(d));
        } catch (const json::exception& e) {
            skip(r, at, std::string("bad field: ") + e.what());
        }
    }
    return r;
}

}  // namespace

LoadResult parse_corpus(std::string_view body, CorpusSchema schema, const LoaderConfig& config,
                        std::string_view source) {
    switch (schema) {
        case CorpusSchema::Normalized: return parse_normalized(body, config, source);
        case CorpusSchema::InspiredLike: return parse_inspired(body, config, source);
        case CorpusSchema::RedialLike: return parse_redial(body, source);
    }
    throw PreconditionError("unknown corpus schema");
}

LoadResult load_corpus(const std::string& path, CorpusSchema schema, const LoaderConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read corpus file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_corpus(ss.str(), schema, config, path);
}

std::string serialize_normalized(const std::vector<RawDialogue>& dialogues) {
    std::string out;
    for (const auto& d : dialogues) {
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            const auto& t = d.turns[i];
            json j;
            j["dialogue_id"] = d.dialogue_id;
            j["turn_index"] = i;
            j["role"] = role_name(t.role);
            j["text"] = t.text;
            if (t.strategy) j["strategy"] = *t.strategy;
            if (!t.items.empty()) j["items"] = t.items;
            if (i == 0 && d.gold_item) j["gold_item"] = *d.gold_item;
            out += j.dump() + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------- annotations

std::string normalize_label(std::string_view label) {
    std::string out;
    bool space = false;
    for (char c : text::to_lower(std::string(label))) {
        if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

AnnotationMap AnnotationMap::parse(std::string_view body) {
    AnnotationMap m;
    std::size_t n = 0;
    for (const auto& line : lines_of(body)) {
        ++n;
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto cells = text::split(line, '\t');
        if (cells.size() != 2 || text::trim(cells[0]).empty() || text::trim(cells[1]).empty()) {
            throw ParseError("annotation map line " + std::to_string(n) + ": expected label<TAB>strategy");
        }
        m.add(text::trim(cells[0]), text::trim(cells[1]));
    }
    return m;
}

AnnotationMap AnnotationMap::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read annotation map " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void AnnotationMap::add(std::string label, std::string strategy_name) {
    entries_.emplace_back(normalize_label(label), std::move(strategy_name));
}

std::optional<StrategyId> AnnotationMap::resolve(std::string_view label, const StrategyCatalog& catalog) const {
    const auto key = normalize_label(label);
    for (const auto& [from, to] : entries_) {
        if (from == key) return strategy_by_name(catalog, to);
    }
    for (const auto& def : catalog) {
        if (normalize_label(def.name) == key) return def.id;
    }
    return std::nullopt;
}

namespace {

struct Block {
    CorpusRole role;
    std::vector<const RawTurn*> turns;
    std::string text() const {
        std::string s;
        for (const auto* t : turns) s += (s.empty() ? "" : " ") + t->text;
        return s;
    }
};

std::vector<Block> blocks_of(const RawDialogue& d) {
    std::vector<Block> out;
    for (const auto& t : d.turns) {
        if (out.empty() || out.back().role != t.role) out.push_back({t.role, {}});
        out.back().turns.push_back(&t);
    }
    return out;
}

}  // namespace

SftExtraction extract_sft_pairs(const std::vector<RawDialogue>& dialogues, const StrategyCatalog& catalog,
                                const AnnotationMap& labels) {
    SftExtraction out;
    const StrategyId fallback(kNumStrategies - 1);
    for (const auto& d : dialogues) {
        auto state = DialogueState::fresh(d.dialogue_id);
        for (const auto& block : blocks_of(d)) {
            if (block.role == CorpusRole::Seeker) {
                state = apply_user_turn(state, block.text());
                continue;
            }
            std::optional<StrategyId> first;
            for (const auto* t : block.turns) {
                if (!t->strategy) continue;
                ++out.annotated_turns;
                if (auto id = labels.resolve(*t->strategy, catalog)) {
                    out.pairs.push_back({state, *id});
                    if (!first) first = id;
                } else {
                    out.unmapped.push_back(*t->strategy);
                }
            }
            state = apply_system_turn(state, first.value_or(fallback), block.text());
        }
    }
    return out;
}

DialogueState replay_dialogue(const RawDialogue& dialogue, const StrategyCatalog& catalog,
                              const AnnotationMap& labels, StrategyId fallback) {
    auto state = DialogueState::fresh(dialogue.dialogue_id);
    for (const auto& block : blocks_of(dialogue)) {
        if (block.role == CorpusRole::Seeker) {
            state = apply_user_turn(state, block.text());
            continue;
        }
        std::optional<StrategyId> id;
        for (const auto* t : block.turns) {
            if (t->strategy && !id) id = labels.resolve(*t->strategy, catalog);
        }
        state = apply_system_turn(state, id.value_or(fallback), block.text());
    }
    return state;
}

// ---------------------------------------------------------------- synthetic

CorpusManifest count_corpus(const std::vector<RawDialogue>& dialogues, const StrategyCatalog& catalog) {
    CorpusManifest m;
    const AnnotationMap none;
    for (const auto& d : dialogues) {
        ++m.dialogues;
        for (const auto& t : d.turns) {
            ++m.utterances;
            if (t.role == CorpusRole::Seeker) {
                ++m.seeker_turns;
                continue;
            }
            ++m.recommender_turns;
            if (!t.strategy) continue;
            ++m.annotated_recommender_turns;
            if (auto id = none.resolve(*t.strategy, catalog)) ++m.strategy_counts[static_cast<std::size_t>(id->index())];
        }
    }
    return m;
}

const std::vector<std::string>& synthetic_cues(StrategyId strategy) {
    static const std::vector<std::vector<std::string>> cues = {
        {"is it actually any good", "how do critics rate it", "can you back that up"},
        {"what do you think yourself", "what is your own take", "do you personally like it"},
        {"i am nervous to try something new", "i rarely leave my comfort zone", "should i give it a chance"},
        {"i just had a long day", "thanks for listening to me", "my week was exhausting"},
        {"we seem to have similar taste", "you and i think alike", "i love the same things as you"},
        {"i have no idea where to start", "can you help me pick", "i need help choosing"},
        {"have you seen it yourself", "did you ever watch that", "have you watched anything like it"},
        {"what would you watch in my place", "what would you pick tonight", "show me what you would do"},
        {"why do you suggest that", "explain your reasoning", "how did you choose that"},
        {"let me tell you my views", "i have strong opinions", "ask me what i believe"},
        {"i watched a lot lately", "i have seen plenty of films", "my recent viewing was busy"},
        {"i want something funny but also smart", "something light but not silly", "maybe thrilling yet calm"},
        {"hello there", "okay then", "hmm alright"},
    };
    if (!strategy.valid()) throw PreconditionError("invalid strategy id");
    return cues[static_cast<std::size_t>(strategy.index())];
}

namespace {

const std::vector<std::string>& default_items() {
    static const std::vector<std::string> v = {
        "My Favorite Year", "Heat", "Alien", "Amelie", "The Shining", "Toy Story",
        "Casablanca", "Groundhog Day", "The Matrix", "Spirited Away", "Die Hard", "Up",
    };
    return v;
}

std::string recommender_line(StrategyId s, const std::string& movie) {
    switch (s.index()) {
        case 0: return movie + " has excellent reviews and won several awards.";
        case 1: return "Honestly, I think " + movie + " is wonderful.";
        case 2: return "You should give " + movie + " a try, you might love it!";
        case 3: return "I hear you, that makes sense.";
        case 4: return "I feel the same way, I also enjoy films like " + movie + ".";
        case 5: return "I can help you find something, maybe " + movie + "?";
        case 6: return "I watched " + movie + " last year and enjoyed it.";
        case 7: return "If I were you I would watch " + movie + " tonight.";
        case 8: return "I suggest " + movie + " because it matches what you told me.";
        case 9: return "What kind of movies do you usually enjoy?";
        case 10: return "What was the last movie you watched?";
        case 11: return "So you are looking for something like " + movie + ", right?";
        default: return "Sure.";
    }
}

std::string label_spelling(const StrategyCatalog& catalog, StrategyId s) {
    std::string out;
    for (char c : text::to_lower(catalog.at(s).name)) out += c == ' ' ? '_' : c;
    return out;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& options, const StrategyCatalog& catalog) {
    if (options.dialogues < 1) throw PreconditionError("synthetic corpus needs at least one dialogue");
    if (options.favored && !options.favored->valid()) throw PreconditionError("favored strategy id is invalid");
    const auto& items = options.items.empty() ? default_items() : options.items;
    Rng rng(options.seed);
    SyntheticCorpus out;
    auto& m = out.manifest;

    const auto draw_strategy = [&] {
        if (options.favored && rng.uniform() < options.favored_share) return *options.favored;
        return StrategyId(static_cast<int>(rng.below(kNumStrategies)));
    };
    const auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng.below(v.size())]; };

    for (int n = 0; n < options.dialogues; ++n) {
        RawDialogue d;
        d.dialogue_id = "synth-" + std::to_string(options.seed) + "-" + std::to_string(n);
        d.gold_item = pick(items);
        const int rounds = 3 + static_cast<int>(rng.below(4));
        auto next = draw_strategy();
        const auto seeker = [&](std::string t) {
            d.turns.push_back({CorpusRole::Seeker, std::move(t), std::nullopt, {}});
            ++m.seeker_turns;
        };
        const auto recommender = [&](std::string t, std::optional<StrategyId> s, std::vector<std::string> mentioned) {
            RawTurn turn{CorpusRole::Recommender, std::move(t), std::nullopt, std::move(mentioned)};
            if (s) {
                turn.strategy = label_spelling(catalog, *s);
                ++m.annotated_recommender_turns;
                ++m.strategy_counts[static_cast<std::size_t>(s->index())];
            }
            d.turns.push_back(std::move(turn));
            ++m.recommender_turns;
        };

        seeker("Hi! " + pick(synthetic_cues(next)) + ".");
        for (int r = 0; r < rounds; ++r) {
            const auto s = next;
            const bool last = r + 1 == rounds;
            const auto& movie = last ? *d.gold_item : pick(items);
            const auto line = recommender_line(s, movie);
            const bool mentions = line.find(movie) != std::string::npos;
            // one in ten recommender turns is left unannotated
            const bool annotated = rng.below(10) != 0;
            recommender(line, annotated ? std::optional(s) : std::nullopt,
                        mentions ? std::vector<std::string>{movie} : std::vector<std::string>{});
            if (rng.below(7) == 0) recommender("Let me know what you think.", std::nullopt, {});
            if (last) {
                if (!mentions) recommender("My pick for you is " + movie + ".", std::nullopt, {movie});
                seeker("Great, I will watch " + movie + "!");
            } else {
                next = draw_strategy();
                seeker("Hmm, " + pick(synthetic_cues(next)) + ".");
            }
        }
        m.utterances += static_cast<int>(d.turns.size());
        ++m.dialogues;
        out.dialogues.push_back(std::move(d));
    }
    return out;
}

}  // namespace rso
