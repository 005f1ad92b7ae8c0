#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rso/dialogue.hpp"
#include "rso/preference.hpp"

namespace rso {


struct KnowledgeTriple {
    std::string head;
    std::string relation;
    std::string tail;

    friend bool operator==(const KnowledgeTriple&, const KnowledgeTriple&) = default;
    friend auto operator<=>(const KnowledgeTriple&, const KnowledgeTriple&) = default;
};

/// Deduplicated triple store with a head-entity lookup.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    explicit KnowledgeGraph(const std::vector<KnowledgeTriple>& triples);

    /// UTF-8 TSV `head<TAB>relation<TAB>tail`; '#' starts a comment line.
    static KnowledgeGraph parse_tsv(std::string_view body);
    static KnowledgeGraph load(const std::string& path);

    const std::vector<KnowledgeTriple>& triples() const noexcept { return triples_; }
    /// Triples with `head == entity`, in store order.
    std::vector<const KnowledgeTriple*> about(const std::string& entity) const;

private:
    std::vector<KnowledgeTriple> triples_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_head_;
};

// ---------------------------------------------------------------- embeddings

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::size_t dim() const = 0;
    /// Identifies the provider in index files.
    virtual std::string id() const = 0;
};

/// Token-hash bucket counts, L2-normalized. Deterministic and offline.
class HashingEmbedder final : public TextEmbedder {
public:
    explicit HashingEmbedder(std::size_t dim = 256) : dim_(dim) {}
    std::vector<double> embed(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override { return "hashing-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

/// Rejects empty text, then delegates to the provider.
std::vector<double> embed_text(const TextEmbedder& provider, std::string_view text);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------- entity index

struct IndexedEntity {
    std::string name;
    std::string profile;
    std::vector<double> embedding;
};

class EntityIndex {
public:
    EntityIndex() = default;
    EntityIndex(std::string provider_id, std::size_t dim, std::vector<IndexedEntity> entries);

    static EntityIndex build(const std::vector<std::pair<std::string, std::string>>& profiles,
                             const TextEmbedder& provider);

    /// `name<TAB>profile` lines.
    static std::vector<std::pair<std::string, std::string>> load_profiles(const std::string& path);

    void save(const std::string& path) const;
    /// Fails when the stored dimension or provider differs from `provider`.
    static EntityIndex load(const std::string& path, const TextEmbedder& provider);

    const std::vector<IndexedEntity>& entries() const noexcept { return entries_; }
    std::size_t dim() const noexcept { return dim_; }
    const std::string& provider_id() const noexcept { return provider_id_; }
    bool empty() const noexcept { return entries_.empty(); }
    bool contains(const std::string& name) const;

private:
    std::string provider_id_;
    std::size_t dim_ = 0;
    std::vector<IndexedEntity> entries_;
};

struct ScoredEntity {
    std::string name;
    double score = 0.0;

    friend bool operator==(const ScoredEntity&, const ScoredEntity&) = default;
};

enum class QueryMode { LastUserUtterance, FullTranscript };

/// Query text used for entity retrieval.
std::string retrieval_query(const DialogueState& state, const PreferenceSummary& pref, QueryMode mode);

/// Exact cosine scan; descending score, ties by ascending name, K clipped to
/// the index size.
std::vector<ScoredEntity> retrieve_entities(const EntityIndex& index, const TextEmbedder& provider,
                                            const DialogueState& state,
                                            const PreferenceSummary& pref, int k,
                                            QueryMode mode = QueryMode::LastUserUtterance);

std::vector<ScoredEntity> top_k(const EntityIndex& index, const std::vector<double>& query, int k);

struct EntityFacts {
    std::string entity;
    std::vector<KnowledgeTriple> triples;

    friend bool operator==(const EntityFacts&, const EntityFacts&) = default;
};

struct FactBundle {
    std::vector<ScoredEntity> entities;
    /// Only entities with at least one triple appear here, in ranking order.
    std::vector<EntityFacts> triples;
    std::string rendered;

    bool empty() const noexcept { return entities.empty() && triples.empty(); }
    friend bool operator==(const FactBundle&, const FactBundle&) = default;
};

/// Separator between entity and relation in rendered facts (U+2014).
inline constexpr std::string_view kFactDash = " \xE2\x80\x94 ";

FactBundle retrieve_facts(const KnowledgeGraph& store, const std::vector<ScoredEntity>& entities,
                          int per_entity_cap);

/// One line per triple: entity, kFactDash, then `relation: tail`.
std::string render_facts(const std::vector<EntityFacts>& groups);

/// Inverse of render_facts.
std::vector<KnowledgeTriple> parse_rendered_facts(std::string_view rendered);

}  // namespace rso
