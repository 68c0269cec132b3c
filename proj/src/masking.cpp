#include "planmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

#include "planmae/error.hpp"
#include "planmae/rng.hpp"

namespace planmae {

namespace {

void check_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw Error(ErrorCode::BadRatio, "ratio " + std::to_string(ratio) + " outside [0,1]");
    }
}

// Every cell sorted by `key(row, col)`, ties broken row-major. All geometric
// strategies reduce to a choice of key plus "mask the first round(ratio*N)".
template <typename Key>
std::vector<int> cell_order(const PatchGrid& grid, Key key) {
    std::vector<int> order(static_cast<std::size_t>(grid.num_patches()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return key(a / grid.cols, a % grid.cols) < key(b / grid.cols, b % grid.cols);
    });
    return order;
}

MaskPlan plan_from_order(const PatchGrid& grid, double ratio, Strategy strategy,
                         std::vector<int>& order, int k) {
    MaskPlan plan;
    plan.strategy = strategy;
    plan.ratio = ratio;
    plan.grid = grid;
    plan.masked.assign(order.begin(), order.begin() + k);
    std::sort(plan.masked.begin(), plan.masked.end());
    return plan;
}

template <typename Key>
MaskPlan plan_by_order(const PatchGrid& grid, double ratio, Strategy strategy, Key key) {
    check_ratio(ratio);
    auto order = cell_order(grid, key);
    return plan_from_order(grid, ratio, strategy, order, masked_count(ratio, grid.num_patches()));
}

// Distance of `v` from the central band of an axis of length `len`
// (two middle cells when even, one when odd).
int band_distance(int v, int len) {
    const int lo = (len % 2 == 0) ? len / 2 - 1 : len / 2;
    const int hi = len / 2;
    if (v < lo) return lo - v;
    if (v > hi) return v - hi;
    return 0;
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::center: return "center";
        case Strategy::perimeter: return "perimeter";
        case Strategy::one_sided: return "one_sided";
        case Strategy::corner: return "corner";
        case Strategy::custom: return "custom";
    }
    return "random";
}

std::string_view to_string(Side s) {
    switch (s) {
        case Side::left: return "left";
        case Side::right: return "right";
        case Side::top: return "top";
        case Side::bottom: return "bottom";
    }
    return "left";
}

std::string_view to_string(Anchor a) {
    switch (a) {
        case Anchor::tl: return "tl";
        case Anchor::tr: return "tr";
        case Anchor::bl: return "bl";
        case Anchor::br: return "br";
    }
    return "tl";
}

Strategy strategy_from_string(std::string_view text) {
    for (Strategy s : {Strategy::random, Strategy::center, Strategy::perimeter,
                       Strategy::one_sided, Strategy::corner, Strategy::custom}) {
        if (text == to_string(s)) return s;
    }
    if (text == "one-sided") return Strategy::one_sided;
    throw Error(ErrorCode::BadConfig, "unknown masking strategy '" + std::string(text) + "'");
}

Side side_from_string(std::string_view text) {
    for (Side s : {Side::left, Side::right, Side::top, Side::bottom}) {
        if (text == to_string(s)) return s;
    }
    throw Error(ErrorCode::BadConfig, "unknown side '" + std::string(text) + "'");
}

Anchor anchor_from_string(std::string_view text) {
    for (Anchor a : {Anchor::tl, Anchor::tr, Anchor::bl, Anchor::br}) {
        if (text == to_string(a)) return a;
    }
    throw Error(ErrorCode::BadConfig, "unknown anchor '" + std::string(text) + "'");
}

std::vector<int> MaskPlan::visible() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(num_visible()));
    auto it = masked.begin();
    for (int i = 0; i < grid.num_patches(); ++i) {
        if (it != masked.end() && *it == i) {
            ++it;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<bool> MaskPlan::mask_flags() const {
    std::vector<bool> flags(static_cast<std::size_t>(grid.num_patches()), false);
    for (int i : masked) flags[static_cast<std::size_t>(i)] = true;
    return flags;
}

int masked_count(double ratio, int n) {
    check_ratio(ratio);
    const int k = static_cast<int>(std::floor(ratio * n + 0.5));
    return std::clamp(k, 0, n);
}

MaskPlan plan_random(const PatchGrid& grid, double ratio, std::uint64_t seed) {
    const int n = grid.num_patches();
    const int k = masked_count(ratio, n);
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    MaskPlan plan;
    plan.strategy = Strategy::random;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.grid = grid;
    plan.masked.assign(pool.begin(), pool.begin() + k);
    std::sort(plan.masked.begin(), plan.masked.end());
    return plan;
}

MaskPlan plan_center(const PatchGrid& grid, double ratio) {
    check_ratio(ratio);
    // Shell index = Chebyshev distance from the central block; each shell is
    // filled row-major.
    auto shell_of = [&](int i) {
        return std::max(band_distance(i / grid.cols, grid.rows),
                        band_distance(i % grid.cols, grid.cols));
    };
    auto order = cell_order(grid, [&](int r, int c) {
        return std::tuple(shell_of(r * grid.cols + c), r, c);
    });
    const int k = masked_count(ratio, grid.num_patches());
    // Row-major puts a shell's top-left corner first. Taken alone it touches
    // the inner region only diagonally, so swap in the next cell of the shell.
    if (k > 0 && k < grid.num_patches()) {
        const auto last = static_cast<std::size_t>(k - 1);
        const int cell = order[last];
        const int shell = shell_of(cell);
        const bool first_of_shell = k == 1 || shell_of(order[last - 1]) != shell;
        const bool is_corner = band_distance(cell / grid.cols, grid.rows) ==
                               band_distance(cell % grid.cols, grid.cols);
        if (shell > 0 && first_of_shell && is_corner && shell_of(order[last + 1]) == shell) {
            std::swap(order[last], order[last + 1]);
        }
    }
    return plan_from_order(grid, ratio, Strategy::center, order, k);
}

MaskPlan plan_perimeter(const PatchGrid& grid, double ratio) {
    return plan_by_order(grid, ratio, Strategy::perimeter, [&](int r, int c) {
        const int ring = std::min({r, c, grid.rows - 1 - r, grid.cols - 1 - c});
        return std::tuple(ring, r, c);
    });
}

MaskPlan plan_one_sided(const PatchGrid& grid, double ratio, Side side) {
    MaskPlan plan = plan_by_order(grid, ratio, Strategy::one_sided, [&](int r, int c) {
        switch (side) {
            case Side::left: return std::tuple(c, r, c);
            case Side::right: return std::tuple(grid.cols - 1 - c, r, c);
            case Side::top: return std::tuple(r, r, c);
            case Side::bottom: return std::tuple(grid.rows - 1 - r, r, c);
        }
        return std::tuple(c, r, c);
    });
    plan.side = side;
    return plan;
}

MaskPlan plan_corner(const PatchGrid& grid, double ratio, Anchor anchor) {
    check_ratio(ratio);
    const int shorter = std::min(grid.rows, grid.cols);
    const int block = std::clamp(
        static_cast<int>(std::floor(std::sqrt(1.0 - ratio) * shorter + 0.5)), 0, shorter);
    const int anchor_r = (anchor == Anchor::bl || anchor == Anchor::br) ? grid.rows - 1 : 0;
    const int anchor_c = (anchor == Anchor::tr || anchor == Anchor::br) ? grid.cols - 1 : 0;
    // Cells outside the kept block go first, farthest from the anchor first;
    // block cells follow in the same order if the target is not yet met.
    MaskPlan plan = plan_by_order(grid, ratio, Strategy::corner, [&](int r, int c) {
        const int dist = std::max(std::abs(r - anchor_r), std::abs(c - anchor_c));
        return std::tuple(dist < block, -dist, r, c);
    });
    plan.anchor = anchor;
    return plan;
}

MaskPlan plan_explicit(const PatchGrid& grid, std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    const int n = grid.num_patches();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= n) {
            throw Error(ErrorCode::BadMask, "index " + std::to_string(indices[i]) +
                                                " outside [0," + std::to_string(n) + ")");
        }
        if (i > 0 && indices[i] == indices[i - 1]) {
            throw Error(ErrorCode::BadMask, "duplicate index " + std::to_string(indices[i]));
        }
    }
    MaskPlan plan;
    plan.strategy = Strategy::custom;
    plan.grid = grid;
    plan.masked = std::move(indices);
    plan.ratio = plan.realized_ratio();
    return plan;
}

StrategySpec StrategySpec::parse(std::string_view text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(':', start);
        parts.emplace_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    StrategySpec spec;
    spec.strategy = strategy_from_string(parts[0]);
    if (spec.strategy == Strategy::custom) {
        throw Error(ErrorCode::BadConfig, "custom plans cannot be named as a strategy");
    }
    if (parts.size() > 3) {
        throw Error(ErrorCode::BadConfig, "malformed strategy '" + std::string(text) + "'");
    }
    if (parts.size() >= 2) {
        try {
            std::size_t used = 0;
            spec.ratio = std::stod(parts[1], &used);
            if (used != parts[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw Error(ErrorCode::BadRatio, "bad ratio '" + parts[1] + "'");
        }
        check_ratio(spec.ratio);
    }
    if (parts.size() == 3) {
        if (spec.strategy == Strategy::one_sided) {
            spec.side = side_from_string(parts[2]);
        } else if (spec.strategy == Strategy::corner) {
            spec.anchor = anchor_from_string(parts[2]);
        } else {
            throw Error(ErrorCode::BadConfig,
                        "strategy " + parts[0] + " takes no side/anchor argument");
        }
    }
    return spec;
}

std::string StrategySpec::to_string() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ratio);
    std::string out = std::string(planmae::to_string(strategy)) + ":" + buf;
    if (strategy == Strategy::one_sided) out += ":" + std::string(planmae::to_string(side));
    if (strategy == Strategy::corner) out += ":" + std::string(planmae::to_string(anchor));
    return out;
}

MaskPlan StrategySpec::plan(const PatchGrid& grid, std::uint64_t seed) const {
    switch (strategy) {
        case Strategy::random: return plan_random(grid, ratio, seed);
        case Strategy::center: return plan_center(grid, ratio);
        case Strategy::perimeter: return plan_perimeter(grid, ratio);
        case Strategy::one_sided: return plan_one_sided(grid, ratio, side);
        case Strategy::corner: return plan_corner(grid, ratio, anchor);
        case Strategy::custom: break;
    }
    throw Error(ErrorCode::BadConfig, "custom plans need explicit indices");
}

std::string method_label(Strategy s) {
    switch (s) {
        case Strategy::random: return "Random Masking";
        case Strategy::center: return "Center Masking";
        case Strategy::perimeter: return "Perimeter Masking";
        case Strategy::one_sided: return "One-sided Masking";
        case Strategy::corner: return "Corner Masking";
        case Strategy::custom: return "Custom Masking";
    }
    return "";
}

nlohmann::json to_json(const MaskPlan& plan) {
    return {
        {"strategy", to_string(plan.strategy)},
        {"ratio", plan.ratio},
        {"seed", plan.seed},
        {"side", to_string(plan.side)},
        {"anchor", to_string(plan.anchor)},
        {"grid",
         {{"rows", plan.grid.rows}, {"cols", plan.grid.cols}, {"patch_size", plan.grid.patch_size}}},
        {"masked", plan.masked},
    };
}

MaskPlan plan_from_json(const nlohmann::json& j) {
    try {
        const auto& g = j.at("grid");
        const PatchGrid grid{g.at("patch_size").get<int>(), g.at("rows").get<int>(),
                             g.at("cols").get<int>()};
        if (grid.patch_size <= 0 || grid.rows <= 0 || grid.cols <= 0) {
            throw Error(ErrorCode::BadMask, "invalid grid in plan");
        }
        MaskPlan plan = plan_explicit(grid, j.at("masked").get<std::vector<int>>());
        plan.strategy = strategy_from_string(j.value("strategy", std::string("custom")));
        plan.ratio = j.value("ratio", plan.realized_ratio());
        plan.seed = j.value("seed", std::uint64_t{0});
        plan.side = side_from_string(j.value("side", std::string("left")));
        plan.anchor = anchor_from_string(j.value("anchor", std::string("tl")));
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadMask, std::string("malformed plan JSON: ") + e.what());
    }
}

}  // namespace planmae
