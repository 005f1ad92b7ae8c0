#include "rso/evaluation.hpp"

#include <set>

#include "rso/error.hpp"
#include "rso/rng.hpp"

namespace rso {

namespace {

/// Union of the facts retrieved over a session, first appearance first.
FactBundle pooled_facts(const std::vector<TurnTrace>& turns) {
    FactBundle out;
    std::set<std::string> seen_entities;
    std::set<KnowledgeTriple> seen_triples;
    for (const auto& t : turns) {
        for (const auto& e : t.facts.entities) {
            if (seen_entities.insert(e.name).second) out.entities.push_back(e);
        }
        for (const auto& group : t.facts.triples) {
            EntityFacts fresh{group.entity, {}};
            for (const auto& triple : group.triples) {
                if (seen_triples.insert(triple).second) fresh.triples.push_back(triple);
            }
            if (!fresh.triples.empty()) out.triples.push_back(std::move(fresh));
        }
    }
    out.rendered = render_facts(out.triples);
    return out;
}

}  // namespace

std::vector<EvalCase> cases_from_corpus(const std::vector<RawDialogue>& dialogues) {
    std::vector<EvalCase> out;
    for (const auto& d : dialogues) {
        EvalCase c;
        c.dialogue_id = d.dialogue_id;
        c.gold_item = d.gold_item;
        for (const auto& t : d.turns) {
            if (t.role == CorpusRole::Seeker) {
                c.opener = t.text;
                break;
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

CaseUserFactory simulated_users(BackendPtr backend, std::shared_ptr<const PromptLibrary> prompts) {
    if (!backend || !prompts) throw PreconditionError("simulated users need a backend and prompts");
    return [backend, prompts](const EvalCase& c, std::uint64_t) -> std::unique_ptr<UserAgent> {
        return std::make_unique<SimulatedUser>(backend, prompts, c.persona, c.gold_item, c.opener);
    };
}

EvalRecord evaluate_episode(const Episode& episode, const std::string& dialogue_id,
                            const std::optional<std::string>& gold_item, const SessionConfig& config,
                            const JudgeOptions& judges) {
    const auto& state = episode.final_state;
    EvalRecord rec;
    rec.dialogue_id = dialogue_id;
    rec.accepted = episode.trajectory.outcome.accepted();
    rec.turns = static_cast<int>(episode.trajectory.records.size());
    rec.recommended_items = recommended_items(state, config.index.get());
    rec.gold_item = gold_item;
    for (const auto& u : state.history) {
        if (u.speaker == Speaker::System) rec.system_utterances.push_back(u.text);
    }
    if (!judges.judge) return rec;
    if (!config.prompts) throw ConfigError("paths.prompts", "judges need a prompt library");

    auto& judge = *judges.judge;
    const auto transcript = render_transcript(state);
    if (judges.wi) rec.wi = judge_watching_intention(judge, *config.prompts, transcript, judges.samples);
    if (judges.cred) rec.cred = judge_credibility(judge, *config.prompts, transcript, pooled_facts(episode.turns), judges.samples);
    if (judges.prs && config.graph) {
        std::optional<std::string> item = gold_item;
        if (!item && !rec.recommended_items.empty()) item = rec.recommended_items.front();
        if (item) {
            const auto info = retrieve_facts(*config.graph, {{*item, 1.0}}, judges.item_fact_cap);
            if (!info.triples.empty()) {
                rec.prs = persuasiveness(measure_intentions(judge, *config.prompts, state, *item, info, judges.samples));
            }
        }
    }
    return rec;
}

EvalRun run_evaluation(const SessionConfig& config, const PolicyParams& params, const std::vector<EvalCase>& cases,
                       const CaseUserFactory& users, const JudgeOptions& judges, std::uint64_t seed) {
    if (cases.empty()) throw PreconditionError("evaluation needs at least one case");
    if (!users) throw ConfigError("backends.user", "no user agent factory");
    config.validate();
    EvalRun run;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        const auto s = derive_seed(seed, i);
        auto user = users(c, s);
        auto episode = run_session(config, params, *user, s, c.dialogue_id);
        run.records.push_back(evaluate_episode(episode, c.dialogue_id, c.gold_item, config, judges));
        run.episodes.push_back(std::move(episode));
    }
    run.report = aggregate(run.records);
    return run;
}

std::vector<EvalRecord> evaluate_logged(const std::vector<Episode>& episodes,
                                        const std::vector<std::optional<std::string>>& gold_items,
                                        const SessionConfig& config, const JudgeOptions& judges) {
    if (episodes.size() != gold_items.size()) throw PreconditionError("one gold entry per logged session");
    std::vector<EvalRecord> out;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        out.push_back(evaluate_episode(episodes[i], episodes[i].final_state.session_id, gold_items[i], config, judges));
    }
    return out;
}

}  // namespace rso
