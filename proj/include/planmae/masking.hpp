#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "planmae/patches.hpp"

namespace planmae {

/// `custom` marks an explicit index set supplied by a caller (mask editor,
/// plan file); the five geometric/random strategies are generated here.
enum class Strategy { random, center, perimeter, one_sided, corner, custom };
enum class Side { left, right, top, bottom };
enum class Anchor { tl, tr, bl, br };

std::string_view to_string(Strategy s);
std::string_view to_string(Side s);
std::string_view to_string(Anchor a);
Strategy strategy_from_string(std::string_view text);
Side side_from_string(std::string_view text);
Anchor anchor_from_string(std::string_view text);

struct MaskPlan {
    Strategy strategy = Strategy::random;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    Side side = Side::left;
    Anchor anchor = Anchor::tl;
    PatchGrid grid;
    std::vector<int> masked;  // ascending, unique, in [0, N)

    int num_masked() const noexcept { return static_cast<int>(masked.size()); }
    int num_visible() const noexcept { return grid.num_patches() - num_masked(); }
    double realized_ratio() const noexcept {
        return grid.num_patches() == 0 ? 0.0
                                       : static_cast<double>(masked.size()) / grid.num_patches();
    }
    std::vector<int> visible() const;
    std::vector<bool> mask_flags() const;

    bool operator==(const MaskPlan&) const = default;
};

/// round(ratio * n) with halves rounded up.
int masked_count(double ratio, int n);

MaskPlan plan_random(const PatchGrid& grid, double ratio, std::uint64_t seed);
MaskPlan plan_center(const PatchGrid& grid, double ratio);
MaskPlan plan_perimeter(const PatchGrid& grid, double ratio);
MaskPlan plan_one_sided(const PatchGrid& grid, double ratio, Side side);
MaskPlan plan_corner(const PatchGrid& grid, double ratio, Anchor anchor);
/// Validates and sorts an explicit index list (BadMask on out-of-range or
/// duplicate indices).
MaskPlan plan_explicit(const PatchGrid& grid, std::vector<int> indices);

/// A strategy with its parameters, as written on command lines:
/// `name:ratio[:side|anchor]`, e.g. `one_sided:0.3:left`, `corner:0.75:br`.
struct StrategySpec {
    Strategy strategy = Strategy::random;
    double ratio = 0.75;
    Side side = Side::left;
    Anchor anchor = Anchor::tl;

    static StrategySpec parse(std::string_view text);
    std::string to_string() const;
    /// The random strategy draws with `seed`; the others ignore it.
    MaskPlan plan(const PatchGrid& grid, std::uint64_t seed) const;

    bool operator==(const StrategySpec&) const = default;
};

/// Table row label, e.g. "One-sided Masking".
std::string method_label(Strategy s);

nlohmann::json to_json(const MaskPlan& plan);
MaskPlan plan_from_json(const nlohmann::json& j);

}  // namespace planmae
