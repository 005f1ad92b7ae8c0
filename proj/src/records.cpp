#include "rso/records.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

namespace {

template <class T>
Json opt(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> get_opt(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

Json preference_json(const PreferenceSummary& p) {
    return Json{{"text", p.text},
                {"likes", p.liked_aspects},
                {"dislikes", p.disliked_aspects},
                {"hints", p.candidate_hints},
                {"parse_warning", p.parse_warning}};
}

PreferenceSummary preference_from(const Json& j) {
    PreferenceSummary p;
    p.text = j.at("text").get<std::string>();
    p.liked_aspects = j.at("likes").get<std::vector<std::string>>();
    p.disliked_aspects = j.at("dislikes").get<std::vector<std::string>>();
    p.candidate_hints = j.at("hints").get<std::vector<std::string>>();
    p.parse_warning = j.at("parse_warning").get<bool>();
    return p;
}

Json facts_json(const FactBundle& f) {
    Json entities = Json::array();
    for (const auto& e : f.entities) entities.push_back({{"name", e.name}, {"score", e.score}});
    Json groups = Json::array();
    for (const auto& g : f.triples) {
        Json triples = Json::array();
        for (const auto& t : g.triples) triples.push_back({t.head, t.relation, t.tail});
        groups.push_back({{"entity", g.entity}, {"triples", triples}});
    }
    return Json{{"entities", entities}, {"triples", groups}, {"rendered", f.rendered}};
}

FactBundle facts_from(const Json& j) {
    FactBundle f;
    for (const auto& e : j.at("entities")) f.entities.push_back({e.at("name").get<std::string>(), e.at("score").get<double>()});
    for (const auto& g : j.at("triples")) {
        EntityFacts ef;
        ef.entity = g.at("entity").get<std::string>();
        for (const auto& t : g.at("triples")) {
            ef.triples.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<std::string>()});
        }
        f.triples.push_back(std::move(ef));
    }
    f.rendered = j.at("rendered").get<std::string>();
    return f;
}

Json reward_json(const RewardSignal& r) {
    return Json{{"normalized", r.normalized}, {"mean_raw", r.mean_raw}, {"raw_scores", r.raw_scores},
                {"terminate", r.terminate}};
}

RewardSignal reward_from(const Json& j) {
    RewardSignal r;
    r.normalized = j.at("normalized").get<double>();
    r.mean_raw = j.at("mean_raw").get<double>();
    r.raw_scores = j.at("raw_scores").get<std::vector<double>>();
    r.terminate = j.at("terminate").get<bool>();
    return r;
}

Json state_json(const DialogueState& s) {
    Json history = Json::array();
    for (const auto& u : s.history) {
        history.push_back({{"speaker", u.speaker == Speaker::System ? "system" : "user"},
                           {"text", u.text},
                           {"turn", u.turn_index}});
    }
    return Json{{"session_id", s.session_id},
                {"turn", s.turn},
                {"last_strategy", s.last_strategy ? Json(s.last_strategy->index()) : Json(nullptr)},
                {"strategy_counts", s.strategy_counts},
                {"last_reward", opt(s.last_reward)},
                {"pinned_context", opt(s.pinned_context)},
                {"history", history}};
}

DialogueState state_from(const Json& j) {
    DialogueState s;
    s.session_id = j.at("session_id").get<std::string>();
    s.turn = j.at("turn").get<int>();
    if (auto h = get_opt<int>(j, "last_strategy")) s.last_strategy = StrategyId(*h);
    s.strategy_counts = j.at("strategy_counts").get<StrategyCounts>();
    s.last_reward = get_opt<double>(j, "last_reward");
    s.pinned_context = get_opt<std::string>(j, "pinned_context");
    for (const auto& u : j.at("history")) {
        const auto speaker = u.at("speaker").get<std::string>();
        if (speaker != "system" && speaker != "user") throw ParseError("unknown speaker '" + speaker + "'");
        s.history.push_back({speaker == "system" ? Speaker::System : Speaker::User, u.at("text").get<std::string>(),
                             u.at("turn").get<int>()});
    }
    return s;
}

}  // namespace

Json turn_to_json(const TurnTrace& t, const StrategyCatalog& catalog) {
    const auto& r = t.record;
    return Json{
        {"turn", t.turn},
        {"strategy", catalog.at(r.strategy).name},
        {"strategy_id", r.strategy.index()},
        {"logprob", r.strategy_logprob},
        {"entropy", t.entropy},
        {"features_digest", r.state_features_digest},
        {"action", r.action_text},
        {"user_reply", opt(t.user_reply)},
        {"reward", t.reward ? reward_json(*t.reward) : Json(nullptr)},
        {"record_reward", r.reward},
        {"terminated", r.terminated},
        {"preference", t.preference ? preference_json(*t.preference) : Json(nullptr)},
        {"facts", facts_json(t.facts)},
    };
}

Json episode_to_json(const Episode& episode, const StrategyCatalog& catalog,
                     const std::optional<std::string>& gold_item) {
    Json turns = Json::array();
    for (const auto& t : episode.turns) turns.push_back(turn_to_json(t, catalog));
    const auto& o = episode.trajectory.outcome;
    return Json{
        {"session_id", episode.final_state.session_id},
        {"seed", episode.seed},
        {"outcome", {{"kind", o.accepted() ? "accepted" : "turn_cap"}, {"turn", o.turn}}},
        {"abandoned", episode.abandoned},
        {"gold_item", opt(gold_item)},
        {"turns", turns},
        {"final_state", state_json(episode.final_state)},
    };
}

LoggedSession episode_from_json(const Json& j) {
    try {
        LoggedSession out;
        auto& ep = out.episode;
        ep.seed = j.at("seed").get<std::uint64_t>();
        ep.abandoned = j.at("abandoned").get<bool>();
        out.gold_item = get_opt<std::string>(j, "gold_item");
        for (const auto& t : j.at("turns")) {
            TurnTrace trace;
            trace.turn = t.at("turn").get<int>();
            trace.entropy = t.at("entropy").get<double>();
            trace.record.strategy = StrategyId(t.at("strategy_id").get<int>());
            if (!trace.record.strategy.valid()) throw ParseError("strategy_id out of range");
            trace.record.strategy_logprob = t.at("logprob").get<double>();
            trace.record.state_features_digest = t.at("features_digest").get<std::uint64_t>();
            trace.record.action_text = t.at("action").get<std::string>();
            trace.record.reward = t.at("record_reward").get<double>();
            trace.record.terminated = t.at("terminated").get<bool>();
            trace.user_reply = get_opt<std::string>(t, "user_reply");
            if (!t.at("reward").is_null()) trace.reward = reward_from(t.at("reward"));
            if (!t.at("preference").is_null()) trace.preference = preference_from(t.at("preference"));
            trace.facts = facts_from(t.at("facts"));
            ep.trajectory.records.push_back(trace.record);
            ep.turns.push_back(std::move(trace));
        }
        const auto kind = j.at("outcome").at("kind").get<std::string>();
        if (kind == "accepted") {
            ep.trajectory.outcome = Outcome::accepted_at(j.at("outcome").at("turn").get<int>());
        } else if (kind != "turn_cap") {
            throw ParseError("unknown outcome kind '" + kind + "'");
        }
        ep.final_state = state_from(j.at("final_state"));
        return out;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed session record: ") + e.what());
    }
}

std::vector<LoggedSession> load_session_log(const std::string& path) {
    std::vector<LoggedSession> out;
    std::istringstream in(read_file(path));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(path + ":" + std::to_string(n) + ": not JSON");
        try {
            out.push_back(episode_from_json(j));
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

Json epoch_stats_to_json(const EpochStats& s, const StrategyCatalog& catalog) {
    Json counts = Json::object();
    for (const auto& def : catalog) counts[def.name] = s.strategy_counts[static_cast<std::size_t>(def.id.index())];
    Json updates = Json::array();
    for (const auto& u : s.updates) {
        updates.push_back({{"objective", u.objective},
                           {"mean_return", u.mean_return},
                           {"mean_entropy", u.mean_entropy},
                           {"gradient_norm", u.gradient_norm}});
    }
    return Json{{"epoch", s.epoch},
                {"episodes", s.episodes},
                {"failed", s.failed},
                {"mean_return", s.mean_return},
                {"acceptance_rate", s.acceptance_rate},
                {"mean_entropy", s.mean_entropy},
                {"mean_length", s.mean_length},
                {"distinct_strategies", s.distinct_strategies},
                {"strategy_counts", counts},
                {"histogram", s.histogram},
                {"updates", updates}};
}

Json sft_stats_to_json(const SftEpochStats& s) {
    return Json{{"epoch", s.epoch}, {"mean_loss", s.mean_loss}, {"accuracy", s.accuracy}};
}

Json report_to_json(const MetricsReport& r) {
    return Json{{"n", r.n},
                {"conv_sr", r.conv_sr},
                {"rec_sr", r.rec_sr},
                {"recall@1", opt(r.recall_at_1)},
                {"recall@5", opt(r.recall_at_5)},
                {"wi_mean", opt(r.wi_mean)},
                {"prs_mean", opt(r.prs_mean)},
                {"cred_mean", opt(r.cred_mean)},
                {"dist2", r.dist2}};
}

Json eval_record_to_json(const EvalRecord& r) {
    return Json{{"dialogue_id", r.dialogue_id},
                {"accepted", r.accepted},
                {"turns", r.turns},
                {"recommended_items", r.recommended_items},
                {"gold_item", opt(r.gold_item)},
                {"wi", opt(r.wi)},
                {"cred", opt(r.cred)},
                {"prs", opt(r.prs)}};
}

std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", value);
    return buf;
}

std::string report_table(const MetricsReport& r) {
    const auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("n/a"); };
    const std::vector<std::pair<std::string, std::string>> rows = {
        {"n", std::to_string(r.n)},
        {"Conv-SR", format_number(r.conv_sr)},
        {"Rec-SR", format_number(r.rec_sr)},
        {"Recall@1", cell(r.recall_at_1)},
        {"Recall@5", cell(r.recall_at_5)},
        {"WI", cell(r.wi_mean)},
        {"PRS", cell(r.prs_mean)},
        {"Cred", cell(r.cred_mean)},
        {"Dist-2", format_number(r.dist2)},
    };
    std::string out;
    for (const auto& [k, v] : rows) {
        out += k + std::string(10 - k.size(), ' ') + v + "\n";
    }
    return out;
}

std::string histogram_tsv(const std::vector<std::vector<double>>& h, const StrategyCatalog& catalog) {
    if (h.size() != catalog.size()) throw PreconditionError("histogram rows do not match the catalog");
    std::string out = "strategy";
    const auto buckets = h.empty() ? 0 : h.front().size();
    for (std::size_t b = 0; b < buckets; ++b) out += "\tb" + std::to_string(b);
    out += "\n";
    for (const auto& def : catalog) {
        out += def.name;
        for (double v : h[static_cast<std::size_t>(def.id.index())]) out += "\t" + format_number(v);
        out += "\n";
    }
    return out;
}

Json manifest_to_json(const CorpusManifest& m, const StrategyCatalog& catalog) {
    Json counts = Json::object();
    for (const auto& def : catalog) counts[def.name] = m.strategy_counts[static_cast<std::size_t>(def.id.index())];
    return Json{{"dialogues", m.dialogues},
                {"utterances", m.utterances},
                {"recommender_turns", m.recommender_turns},
                {"seeker_turns", m.seeker_turns},
                {"annotated_recommender_turns", m.annotated_recommender_turns},
                {"strategy_counts", counts}};
}

CorpusManifest manifest_from_json(const Json& j, const StrategyCatalog& catalog) {
    try {
        CorpusManifest m;
        m.dialogues = j.at("dialogues").get<int>();
        m.utterances = j.at("utterances").get<int>();
        m.recommender_turns = j.at("recommender_turns").get<int>();
        m.seeker_turns = j.at("seeker_turns").get<int>();
        m.annotated_recommender_turns = j.at("annotated_recommender_turns").get<int>();
        for (const auto& def : catalog) {
            m.strategy_counts[static_cast<std::size_t>(def.id.index())] = j.at("strategy_counts").at(def.name).get<int>();
        }
        return m;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed manifest: ") + e.what());
    }
}

void write_file(const std::string& path, const std::string& body) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const auto tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out << body;
        if (!out) throw Error("write failed for " + tmp);
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace rso
