#include "rso/strategy.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "rso/error.hpp"
#include "rso/text.hpp"

namespace rso {

std::string_view category_name(StrategyCategory c) {
    switch (c) {
        case StrategyCategory::Sociable: return "Sociable";
        case StrategyCategory::PreferenceElicitation: return "PreferenceElicitation";
        case StrategyCategory::NonStrategy: return "NonStrategy";
    }
    return "NonStrategy";
}

std::optional<StrategyCategory> parse_category(std::string_view s) {
    const auto t = text::trim(s);
    for (auto c : {StrategyCategory::Sociable, StrategyCategory::PreferenceElicitation,
                   StrategyCategory::NonStrategy}) {
        if (text::iequals(t, category_name(c))) return c;
    }
    return std::nullopt;
}

StrategyCatalog::StrategyCatalog(std::vector<StrategyDef> defs) : defs_(std::move(defs)) {
    if (defs_.size() != static_cast<std::size_t>(kNumStrategies)) {
        throw PreconditionError("strategy catalog must hold exactly 13 strategies, got " +
                                std::to_string(defs_.size()));
    }
    std::set<std::string> names;
    std::set<std::string> instructions;
    int counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < defs_.size(); ++i) {
        const auto& d = defs_[i];
        if (d.id.index() != static_cast<int>(i)) {
            throw PreconditionError("strategy ids must be dense and in order; entry " +
                                    std::to_string(i) + " has id " +
                                    std::to_string(d.id.index()));
        }
        if (text::trim(d.name).empty() || text::trim(d.instruction).empty()) {
            throw PreconditionError("strategy " + std::to_string(i) + " has an empty field");
        }
        if (!names.insert(text::to_lower(text::trim(d.name))).second) {
            throw PreconditionError("duplicate strategy name: " + d.name);
        }
        if (!instructions.insert(d.instruction).second) {
            throw PreconditionError("duplicate strategy instruction for " + d.name);
        }
        ++counts[static_cast<int>(d.category)];
    }
    if (counts[0] != 9 || counts[1] != 3 || counts[2] != 1) {
        throw PreconditionError(
            "strategy categories must split 9 Sociable / 3 PreferenceElicitation / 1 NonStrategy");
    }
}

const StrategyDef& StrategyCatalog::at(StrategyId id) const {
    if (!id.valid()) throw PreconditionError("strategy id out of range: " + std::to_string(id.index()));
    return defs_[static_cast<std::size_t>(id.index())];
}

const StrategyCatalog& catalog_default() {
    using C = StrategyCategory;
    static const StrategyCatalog catalog([] {
        const std::pair<const char*, std::pair<C, const char*>> rows[] = {
            {"Credibility", {C::Sociable, "Provide factual information about the item attributes to demonstrate expertise."}},
            {"Personal Opinion", {C::Sociable, "Express subjective opinion about the item without contradicting given factual information."}},
            {"Encouragement", {C::Sociable, "Compliment the user's taste and encourage them to try the recommended item."}},
            {"Acknowledgment", {C::Sociable, "Use short, cheerful responses to convey excitement or appreciation."}},
            {"Similarity", {C::Sociable, "Express similar preferences or opinions, or show agreement with the user's views."}},
            {"Offer Help", {C::Sociable, "Offer assistance in finding suitable recommendations."}},
            {"Personal Experience", {C::Sociable, "Share your own experience related to the recommended item."}},
            {"Self Modeling", {C::Sociable, "Model behavior by stating your own positive reaction to the recommended item."}},
            {"Transparency", {C::Sociable, "Be honest about the recommendation logic or confirm user preferences before recommending."}},
            {"Opinion Inquiry", {C::PreferenceElicitation, "Ask about the user's opinion on specific item attributes."}},
            {"Experience Inquiry", {C::PreferenceElicitation, "Ask about the user's past experiences to gather more information about their preferences."}},
            {"Rephrase Preference", {C::PreferenceElicitation, "Rephrase the inferred user preferences to confirm understanding."}},
            {"No Strategy", {C::NonStrategy, "Chat naturally with the user without following any specific conversational strategy."}},
        };
        std::vector<StrategyDef> defs;
        int i = 0;
        for (const auto& [name, rest] : rows) {
            defs.push_back(StrategyDef{StrategyId(i++), name, rest.first, rest.second});
        }
        return defs;
    }());
    return catalog;
}

std::optional<StrategyId> strategy_by_name(const StrategyCatalog& catalog, std::string_view name) {
    const auto wanted = text::trim(name);
    for (const auto& d : catalog) {
        if (text::iequals(d.name, wanted)) return d.id;
    }
    return std::nullopt;
}

std::string serialize_catalog(const StrategyCatalog& catalog) {
    std::ostringstream out;
    out << "# id\tname\tcategory\tinstruction\n";
    for (const auto& d : catalog) {
        out << d.id.index() << '\t' << d.name << '\t' << category_name(d.category) << '\t'
            << d.instruction << '\n';
    }
    return out.str();
}

StrategyCatalog parse_catalog(std::string_view body) {
    std::vector<StrategyDef> defs;
    int line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
        ++line_no;
        auto line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() != 4) {
            throw ParseError("catalog line " + std::to_string(line_no) +
                             ": expected 4 tab-separated fields");
        }
        int id = 0;
        try {
            std::size_t used = 0;
            id = std::stoi(fields[0], &used);
            if (used != text::trim(fields[0]).size()) throw std::invalid_argument("id");
        } catch (const std::exception&) {
            throw ParseError("catalog line " + std::to_string(line_no) + ": bad id '" + fields[0] + "'");
        }
        const auto category = parse_category(fields[2]);
        if (!category) {
            throw ParseError("catalog line " + std::to_string(line_no) + ": unknown category '" +
                             fields[2] + "'");
        }
        defs.push_back(StrategyDef{StrategyId(id), text::trim(fields[1]), *category,
                                   text::trim(fields[3])});
    }
    return StrategyCatalog(std::move(defs));
}

StrategyCatalog load_catalog(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("paths.catalog", "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_catalog(buf.str());
}

}  // namespace rso
