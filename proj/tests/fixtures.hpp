#pragma once

// Small all-mock worlds shared by the session, metrics and service suites.

#include <memory>
#include <string>
#include <vector>

#include "rso/session.hpp"

namespace rso::testing {

inline std::vector<std::pair<std::string, std::string>> tiny_profiles() {
    return {
        {"My Favorite Year", "comedy drama about a young writer and a swashbuckling film star"},
        {"Heat", "crime thriller with a detective chasing a master thief in los angeles"},
        {"Alien", "science fiction horror with a crew hunted by a creature in space"},
        {"Amelie", "romantic comedy in paris about a shy waitress who helps strangers"},
        {"The Shining", "horror film about a writer in an isolated snowbound hotel"},
        {"Toy Story", "animated family comedy about toys that come alive"},
    };
}

inline std::shared_ptr<const KnowledgeGraph> tiny_graph() {
    return std::make_shared<KnowledgeGraph>(std::vector<KnowledgeTriple>{
        {"My Favorite Year", "genre", "comedy-drama"},
        {"My Favorite Year", "release year", "1982"},
        {"Heat", "genre", "crime"},
        {"Heat", "director", "Michael Mann"},
        {"Alien", "genre", "science fiction horror"},
        {"Amelie", "genre", "romantic comedy"},
        {"The Shining", "genre", "horror"},
        {"Toy Story", "genre", "animation"},
    });
}

/// Mock world: keyword preferences, templated actor, caller-supplied judge.
/// Every backend writes into `log`.
inline SessionConfig mock_session(std::shared_ptr<CallLog> log, MockBackend::Responder judge,
                                  std::uint64_t seed = 11) {
    SessionConfig c;
    c.rng_seed = seed;
    c.catalog = std::make_shared<StrategyCatalog>(catalog_default());
    c.prompts = std::make_shared<PromptLibrary>(PromptLibrary::defaults());
    auto embedder = std::make_shared<HashingEmbedder>(64);
    c.embedder = embedder;
    c.index = std::make_shared<EntityIndex>(EntityIndex::build(tiny_profiles(), *embedder));
    c.graph = tiny_graph();
    c.experts.preference =
        std::make_shared<MockBackend>(mock::keyword_preference({"comedy", "horror", "crime", "animated"}), seed, log);
    c.experts.actor = std::make_shared<MockBackend>(
        mock::templated("[{strategy_name}] You could try [[{top_entity}]]."), seed, log);
    c.experts.rewarder = std::make_shared<MockBackend>(std::move(judge), seed, log);
    return c;
}

inline std::unique_ptr<UserAgent> chatty_user(int replies = 12) {
    std::vector<std::string> r;
    for (int i = 0; i < replies; ++i) r.push_back(i % 2 ? "Something funny maybe." : "I like horror, not comedy.");
    return std::make_unique<ScriptedUser>(std::move(r), "Hi, I want a comedy tonight.");
}

}  // namespace rso::testing
