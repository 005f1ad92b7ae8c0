#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rso {

inline constexpr int kNumStrategies = 13;

/// Dense index of a macro-level strategy, stable across runs.
class StrategyId {
public:
    constexpr StrategyId() = default;
    constexpr explicit StrategyId(int index) : index_(index) {}

    constexpr int index() const noexcept { return index_; }
    constexpr bool valid() const noexcept { return index_ >= 0 && index_ < kNumStrategies; }

    friend constexpr bool operator==(StrategyId, StrategyId) = default;
    friend constexpr auto operator<=>(StrategyId, StrategyId) = default;

private:
    int index_ = 0;
};

enum class StrategyCategory { Sociable, PreferenceElicitation, NonStrategy };

std::string_view category_name(StrategyCategory c);
std::optional<StrategyCategory> parse_category(std::string_view s);

struct StrategyDef {
    StrategyId id;
    std::string name;
    StrategyCategory category = StrategyCategory::NonStrategy;
    std::string instruction;

    friend bool operator==(const StrategyDef&, const StrategyDef&) = default;
};

/// The closed candidate set of macro strategies. Immutable once built.
class StrategyCatalog {
public:
    /// Validates count, dense ids, uniqueness and the 9/3/1 category split.
    explicit StrategyCatalog(std::vector<StrategyDef> defs);

    const std::vector<StrategyDef>& defs() const noexcept { return defs_; }
    const StrategyDef& at(StrategyId id) const;
    std::size_t size() const noexcept { return defs_.size(); }

    auto begin() const noexcept { return defs_.begin(); }
    auto end() const noexcept { return defs_.end(); }

    friend bool operator==(const StrategyCatalog&, const StrategyCatalog&) = default;

private:
    std::vector<StrategyDef> defs_;
};

/// The thirteen strategies of the taxonomy with their descriptions as instructions.
const StrategyCatalog& catalog_default();

/// Case-insensitive, whitespace-trimmed name lookup.
std::optional<StrategyId> strategy_by_name(const StrategyCatalog& catalog, std::string_view name);

/// Tab-separated text: `id<TAB>name<TAB>category<TAB>instruction`, '#' comments.
std::string serialize_catalog(const StrategyCatalog& catalog);
StrategyCatalog parse_catalog(std::string_view text);
StrategyCatalog load_catalog(const std::string& path);

}  // namespace rso
