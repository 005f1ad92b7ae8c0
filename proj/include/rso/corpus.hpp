#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rso/dialogue.hpp"
#include "rso/strategy.hpp"

namespace rso {

enum class CorpusRole { Recommender, Seeker };

struct RawTurn {
    CorpusRole role = CorpusRole::Seeker;
    std::string text;
    std::optional<std::string> strategy;
    std::vector<std::string> items;

    friend bool operator==(const RawTurn&, const RawTurn&) = default;
};

struct RawDialogue {
    std::string dialogue_id;
    std::vector<RawTurn> turns;
    std::optional<std::string> gold_item;

    friend bool operator==(const RawDialogue&, const RawDialogue&) = default;
};

enum class CorpusSchema { InspiredLike, RedialLike, Normalized };

std::optional<CorpusSchema> parse_schema(std::string_view name);
std::string_view schema_name(CorpusSchema schema);

/// Speaker strings accepted by the loaders, compared case-insensitively.
struct LoaderConfig {
    std::vector<std::string> recommender_roles = {"recommender", "system", "expert"};
    std::vector<std::string> seeker_roles = {"seeker", "user"};
};

struct LoadResult {
    std::vector<RawDialogue> dialogues;
    int total_records = 0;
    int skipped_records = 0;
    /// One line per skipped record: `<where>: <reason>`.
    std::vector<std::string> diagnostics;
};

/// Throws Error on an unreadable file.
LoadResult load_corpus(const std::string& path, CorpusSchema schema, const LoaderConfig& config = {});

/// Same parsers over in-memory text; `source` labels diagnostics.
LoadResult parse_corpus(std::string_view body, CorpusSchema schema, const LoaderConfig& config = {},
                        std::string_view source = "<memory>");

/// Normalized JSONL, one turn per line.
std::string serialize_normalized(const std::vector<RawDialogue>& dialogues);

// ---------------------------------------------------------------- annotations

/// Dataset label -> catalog strategy name. Labels match after lowercasing
/// and treating '_', '-' and runs of spaces alike.
class AnnotationMap {
public:
    AnnotationMap() = default;

    /// `label<TAB>strategy name` lines, '#' comments.
    static AnnotationMap parse(std::string_view body);
    static AnnotationMap load(const std::string& path);

    void add(std::string label, std::string strategy_name);

    /// Mapped name first, then a direct catalog name match.
    std::optional<StrategyId> resolve(std::string_view label, const StrategyCatalog& catalog) const;

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string normalize_label(std::string_view label);

struct SftExtraction {
    std::vector<SftPair> pairs;
    /// One entry per annotated recommender turn whose label did not map.
    std::vector<std::string> unmapped;
    int annotated_turns = 0;
};

/// Consecutive utterances by the same role are merged into one dialogue
/// utterance. Every annotated recommender utterance yields one pair whose
/// state is the dialogue before its recommender block.
SftExtraction extract_sft_pairs(const std::vector<RawDialogue>& dialogues, const StrategyCatalog& catalog,
                                const AnnotationMap& labels = {});

/// Replays a dialogue into a state, merging same-role runs. Unannotated
/// recommender turns use `fallback`.
DialogueState replay_dialogue(const RawDialogue& dialogue, const StrategyCatalog& catalog,
                              const AnnotationMap& labels = {}, StrategyId fallback = StrategyId(kNumStrategies - 1));

// ---------------------------------------------------------------- synthetic

struct CorpusManifest {
    int dialogues = 0;
    int utterances = 0;
    int recommender_turns = 0;
    int seeker_turns = 0;
    int annotated_recommender_turns = 0;
    std::array<int, kNumStrategies> strategy_counts{};

    friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

CorpusManifest count_corpus(const std::vector<RawDialogue>& dialogues, const StrategyCatalog& catalog);

struct SyntheticOptions {
    std::uint64_t seed = 7;
    int dialogues = 20;
    /// Movie titles used for mentions and gold items.
    std::vector<std::string> items;
    /// When set, this strategy is drawn with probability `favored_share`.
    std::optional<StrategyId> favored;
    double favored_share = 0.5;
};

struct SyntheticCorpus {
    std::vector<RawDialogue> dialogues;
    CorpusManifest manifest;
};

/// Template dialogues. Each seeker message carries a cue phrase tied to the
/// strategy of the recommender reply that follows, so labels are learnable
/// from the state.
SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& options,
                                          const StrategyCatalog& catalog = catalog_default());

/// The seeker cue phrases for `strategy`.
const std::vector<std::string>& synthetic_cues(StrategyId strategy);

}  // namespace rso
