#include "rso/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

namespace {

std::string read_file(const std::string& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(field, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

// ---------------------------------------------------------------- knowledge graph

KnowledgeGraph::KnowledgeGraph(const std::vector<KnowledgeTriple>& triples) {
    std::set<KnowledgeTriple> seen;
    for (const auto& t : triples) {
        if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
            throw PreconditionError("knowledge triple with an empty field");
        }
        if (!seen.insert(t).second) continue;
        by_head_[t.head].push_back(triples_.size());
        triples_.push_back(t);
    }
}

KnowledgeGraph KnowledgeGraph::parse_tsv(std::string_view body) {
    std::vector<KnowledgeTriple> triples;
    int line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
        ++line_no;
        const auto line = strip_cr(raw);
        if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() != 3) {
            throw ParseError("KG line " + std::to_string(line_no) + ": expected head<TAB>relation<TAB>tail");
        }
        KnowledgeTriple t{text::trim(fields[0]), text::trim(fields[1]), text::trim(fields[2])};
        if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
            throw ParseError("KG line " + std::to_string(line_no) + ": empty field");
        }
        triples.push_back(std::move(t));
    }
    return KnowledgeGraph(triples);
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
    return parse_tsv(read_file(path, "paths.kg"));
}

std::vector<const KnowledgeTriple*> KnowledgeGraph::about(const std::string& entity) const {
    std::vector<const KnowledgeTriple*> out;
    const auto it = by_head_.find(entity);
    if (it == by_head_.end()) return out;
    for (auto i : it->second) out.push_back(&triples_[i]);
    return out;
}

// ---------------------------------------------------------------- embeddings

std::vector<double> HashingEmbedder::embed(std::string_view input) const {
    std::vector<double> v(dim_, 0.0);
    for (const auto& token : text::tokenize(input)) v[text::fnv1a(token) % dim_] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

std::vector<double> embed_text(const TextEmbedder& provider, std::string_view input) {
    if (text::trim(input).empty()) throw PreconditionError("cannot embed empty text");
    auto v = provider.embed(input);
    if (v.size() != provider.dim()) throw PreconditionError("embedding provider returned a wrong dimension");
    return v;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw PreconditionError("cosine of vectors with different dimensions");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------- entity index

EntityIndex::EntityIndex(std::string provider_id, std::size_t dim, std::vector<IndexedEntity> entries)
    : provider_id_(std::move(provider_id)), dim_(dim), entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (e.embedding.size() != dim_) {
            throw PreconditionError("entity '" + e.name + "' has embedding dimension " +
                                    std::to_string(e.embedding.size()) + ", expected " + std::to_string(dim_));
        }
        double norm = 0.0;
        for (double x : e.embedding) norm += x * x;
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw PreconditionError("entity '" + e.name + "' has a zero or non-finite embedding");
        }
    }
}

EntityIndex EntityIndex::build(const std::vector<std::pair<std::string, std::string>>& profiles,
                               const TextEmbedder& provider) {
    std::vector<IndexedEntity> entries;
    entries.reserve(profiles.size());
    for (const auto& [name, profile] : profiles) {
        entries.push_back(IndexedEntity{name, profile, embed_text(provider, profile)});
    }
    return EntityIndex(provider.id(), provider.dim(), std::move(entries));
}

std::vector<std::pair<std::string, std::string>> EntityIndex::load_profiles(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    int line_no = 0;
    for (const auto& raw : text::split(read_file(path, "paths.profiles"), '\n')) {
        ++line_no;
        const auto line = strip_cr(raw);
        if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected name<TAB>profile");
        }
        auto name = text::trim(std::string_view(line).substr(0, tab));
        auto profile = text::trim(std::string_view(line).substr(tab + 1));
        if (name.empty() || profile.empty()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty name or profile");
        }
        out.emplace_back(std::move(name), std::move(profile));
    }
    return out;
}

bool EntityIndex::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

namespace {

constexpr char kIndexMagic[8] = {'R', 'S', 'O', 'I', 'D', 'X', '1', '\0'};

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) throw ParseError("truncated index file: " + path);
    return v;
}
std::string read_str(std::istream& in, const std::string& path) {
    const auto n = read_u32(in, path);
    if (n > (1u << 26)) throw ParseError("corrupt index file: " + path);
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw ParseError("truncated index file: " + path);
    return s;
}

}  // namespace

void EntityIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("paths.index", "cannot write " + path);
    out.write(kIndexMagic, sizeof(kIndexMagic));
    write_str(out, provider_id_);
    write_u32(out, static_cast<std::uint32_t>(dim_));
    write_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        write_str(out, e.name);
        write_str(out, e.profile);
        out.write(reinterpret_cast<const char*>(e.embedding.data()),
                  static_cast<std::streamsize>(e.embedding.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("paths.index", "write failed for " + path);
}

EntityIndex EntityIndex::load(const std::string& path, const TextEmbedder& provider) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("paths.index", "cannot read " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kIndexMagic, 8) != 0) {
        throw ParseError("not an entity index file: " + path);
    }
    auto provider_id = read_str(in, path);
    const auto dim = read_u32(in, path);
    const auto count = read_u32(in, path);
    if (dim != provider.dim()) {
        throw ConfigError("paths.index", "index dimension " + std::to_string(dim) +
                                             " does not match provider dimension " +
                                             std::to_string(provider.dim()));
    }
    if (provider_id != provider.id()) {
        throw ConfigError("paths.index", "index was built with provider '" + provider_id +
                                             "' but '" + provider.id() + "' is configured");
    }
    std::vector<IndexedEntity> entries(count);
    for (auto& e : entries) {
        e.name = read_str(in, path);
        e.profile = read_str(in, path);
        e.embedding.resize(dim);
        if (!in.read(reinterpret_cast<char*>(e.embedding.data()),
                     static_cast<std::streamsize>(dim * sizeof(double)))) {
            throw ParseError("truncated index file: " + path);
        }
    }
    return EntityIndex(std::move(provider_id), dim, std::move(entries));
}

// ---------------------------------------------------------------- retrieval

std::string retrieval_query(const DialogueState& state, const PreferenceSummary& pref, QueryMode mode) {
    std::string query;
    if (mode == QueryMode::FullTranscript) {
        query = render_transcript(state);
    } else if (auto user = state.last_user_text()) {
        query = *user;
    }
    if (!pref.text.empty()) query += (query.empty() ? "" : " ") + pref.text;
    return query;
}

std::vector<ScoredEntity> top_k(const EntityIndex& index, const std::vector<double>& query, int k) {
    if (k < 1) throw PreconditionError("K must be >= 1");
    if (index.empty()) throw PreconditionError("entity index is empty");
    std::vector<ScoredEntity> scored;
    scored.reserve(index.entries().size());
    for (const auto& e : index.entries()) scored.push_back({e.name, cosine_similarity(query, e.embedding)});
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    const auto better = [](const ScoredEntity& a, const ScoredEntity& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    scored.resize(n);
    return scored;
}

std::vector<ScoredEntity> retrieve_entities(const EntityIndex& index, const TextEmbedder& provider,
                                            const DialogueState& state,
                                            const PreferenceSummary& pref, int k, QueryMode mode) {
    if (k < 1) throw PreconditionError("K must be >= 1");
    if (index.empty()) throw PreconditionError("entity index is empty");
    const auto query = retrieval_query(state, pref, mode);
    return top_k(index, embed_text(provider, query), k);
}

std::string render_facts(const std::vector<EntityFacts>& groups) {
    std::string out;
    for (const auto& g : groups) {
        for (const auto& t : g.triples) {
            out += t.head;
            out += kFactDash;
            out += t.relation + ": " + t.tail + "\n";
        }
    }
    return out;
}

std::vector<KnowledgeTriple> parse_rendered_facts(std::string_view rendered) {
    std::vector<KnowledgeTriple> out;
    for (const auto& line : text::split(rendered, '\n')) {
        if (line.empty()) continue;
        const auto dash = line.find(kFactDash);
        if (dash == std::string::npos) throw ParseError("fact line without entity separator: " + line);
        const auto rest = line.substr(dash + kFactDash.size());
        const auto colon = rest.find(": ");
        if (colon == std::string::npos) throw ParseError("fact line without relation separator: " + line);
        out.push_back({line.substr(0, dash), rest.substr(0, colon), rest.substr(colon + 2)});
    }
    return out;
}

FactBundle retrieve_facts(const KnowledgeGraph& store, const std::vector<ScoredEntity>& entities,
                          int per_entity_cap) {
    if (per_entity_cap < 1) throw PreconditionError("per_entity_cap must be >= 1");
    FactBundle bundle;
    bundle.entities = entities;
    for (const auto& e : entities) {
        EntityFacts group{e.name, {}};
        for (const auto* t : store.about(e.name)) {
            if (static_cast<int>(group.triples.size()) >= per_entity_cap) break;
            group.triples.push_back(*t);
        }
        if (!group.triples.empty()) bundle.triples.push_back(std::move(group));
    }
    bundle.rendered = render_facts(bundle.triples);
    return bundle;
}

}  // namespace rso
