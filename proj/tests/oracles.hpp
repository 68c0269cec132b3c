#pragma once

// Reference implementations used only by tests. They are deliberately
// naive and share no code with the library paths they check.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <vector>

#include "planmae/masking.hpp"
#include "planmae/model.hpp"
#include "planmae/raster.hpp"
#include "planmae/rng.hpp"
#include "planmae/training.hpp"

namespace planmae::testing {

inline Raster random_raster(Rng& rng, int h, int w, Mode mode) {
    std::vector<float> data(static_cast<std::size_t>(h) * w * channels_for(mode));
    for (float& v : data) v = static_cast<float>(rng.uniform());
    return Raster(h, w, mode, std::move(data));
}

/// Tiny model used by gradient checks: 4x4 image, 2x2 patches, so a 2x2
/// patch grid, enc/dec width 8, one block each.
inline ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig c;
    c.image_size = 4;
    c.patch_size = 2;
    c.channels = 1;
    c.enc_dim = 8;
    c.enc_depth = 1;
    c.enc_heads = 2;
    c.dec_dim = 8;
    c.dec_depth = 1;
    c.dec_heads = 2;
    c.mlp_ratio = 2.0;
    c.seed = seed;
    return c;
}

/// Every parameter drawn from N(0, 0.5) so no path is trivially flat.
inline ModelParams<double> random_params(const ModelConfig& config, std::uint64_t seed) {
    auto params = ModelParams<double>::zeros(config);
    Rng rng(seed);
    for (auto* m : tensor_list(params)) {
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = 0.5 * rng.normal();
    }
    return params;
}

/// Masked set by direct enumeration of the documented fill orders. Cells are
/// listed in fill order, then the first round(ratio*N) are kept.
inline std::vector<int> reference_mask(const PatchGrid& g, Strategy s, double ratio,
                                       Side side = Side::left, Anchor anchor = Anchor::tl) {
    const int R = g.rows, C = g.cols, n = R * C;
    const int k = static_cast<int>(std::lround(ratio * n));
    std::vector<int> fill;
    auto taken = [&](int i) { return std::find(fill.begin(), fill.end(), i) != fill.end(); };
    if (s == Strategy::center) {
        const int r_lo = (R - 1) / 2, r_hi = R / 2, c_lo = (C - 1) / 2, c_hi = C / 2;
        for (int shell = 0; static_cast<int>(fill.size()) < n; ++shell) {
            std::vector<int> ring;
            for (int r = std::max(0, r_lo - shell); r <= std::min(R - 1, r_hi + shell); ++r)
                for (int c = std::max(0, c_lo - shell); c <= std::min(C - 1, c_hi + shell); ++c)
                    if (!taken(r * C + c)) ring.push_back(r * C + c);
            // a partial shell of one cell must not be the lone top-left corner
            const int need = k - static_cast<int>(fill.size());
            if (need == 1 && ring.size() > 1 && shell > 0 && ring[0] / C == r_lo - shell &&
                ring[0] % C == c_lo - shell) {
                std::swap(ring[0], ring[1]);
            }
            fill.insert(fill.end(), ring.begin(), ring.end());
        }
    } else if (s == Strategy::perimeter) {
        for (int ring = 0; static_cast<int>(fill.size()) < n; ++ring)
            for (int i = 0; i < n; ++i) {
                const int r = i / C, c = i % C;
                if (std::min(std::min(r, c), std::min(R - 1 - r, C - 1 - c)) == ring) fill.push_back(i);
            }
    } else if (s == Strategy::one_sided) {
        const bool by_col = side == Side::left || side == Side::right;
        const int lines = by_col ? C : R;
        for (int l = 0; l < lines; ++l) {
            const int line = (side == Side::right) ? C - 1 - l : (side == Side::bottom) ? R - 1 - l : l;
            for (int i = 0; i < n; ++i)
                if ((by_col ? i % C : i / C) == line) fill.push_back(i);
        }
    } else if (s == Strategy::corner) {
        const int b = static_cast<int>(std::lround(std::sqrt(1.0 - ratio) * std::min(R, C)));
        const int ar = (anchor == Anchor::bl || anchor == Anchor::br) ? R - 1 : 0;
        const int ac = (anchor == Anchor::tr || anchor == Anchor::br) ? C - 1 : 0;
        auto dist = [&](int i) { return std::max(std::abs(i / C - ar), std::abs(i % C - ac)); };
        auto in_block = [&](int i) {
            return std::abs(i / C - ar) < b && std::abs(i % C - ac) < b;
        };
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<int> part;
            for (int i = 0; i < n; ++i)
                if (in_block(i) == (pass == 1)) part.push_back(i);
            std::stable_sort(part.begin(), part.end(), [&](int a, int c) { return dist(a) > dist(c); });
            fill.insert(fill.end(), part.begin(), part.end());
        }
    }
    std::vector<int> out(fill.begin(), fill.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

inline double naive_psnr(const std::vector<double>& a, const std::vector<double>& b, double peak) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = se / static_cast<double>(a.size());
    return 10.0 * std::log10(peak * peak / mse);
}

// Direct evaluation: for each window position build the 2D Gaussian weights
// and take weighted moments with a plain double loop.
inline double naive_ssim(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    const int win = 11;
    const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    std::vector<double> g(win * win);
    double total = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - 5, dx = x - 5;
            g[static_cast<std::size_t>(y * win + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            total += g[static_cast<std::size_t>(y * win + x)];
        }
    double sum = 0.0;
    int count = 0;
    for (int oy = 0; oy + win <= h; ++oy)
        for (int ox = 0; ox + win <= w; ++ox) {
            double ma = 0, mb = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double k = g[static_cast<std::size_t>(y * win + x)] / total;
                    ma += k * a[static_cast<std::size_t>((oy + y) * w + ox + x)];
                    mb += k * b[static_cast<std::size_t>((oy + y) * w + ox + x)];
                }
            double va = 0, vb = 0, cov = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double k = g[static_cast<std::size_t>(y * win + x)] / total;
                    const double da = a[static_cast<std::size_t>((oy + y) * w + ox + x)] - ma;
                    const double db = b[static_cast<std::size_t>((oy + y) * w + ox + x)] - mb;
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return sum / count;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
};

/// Central finite differences of the batch loss against analytic grads.
/// Relative error uses max(|a|, |n|, floor) as denominator.
inline GradCheckResult finite_difference_check(const ModelConfig& config, ModelParams<double> params,
                                               const std::vector<PatchSequence>& batch,
                                               const std::vector<MaskPlan>& plans,
                                               double eps = 1e-5, double floor = 1e-6) {
    const auto analytic = grad(params, config, batch, plans);
    const auto g = tensor_list(analytic.grads);
    auto p = tensor_list(params);
    GradCheckResult out;
    auto loss = [&] { return grad(params, config, batch, plans).loss; };
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (Eigen::Index i = 0; i < p[t]->size(); ++i) {
            double& x = p[t]->data()[i];
            const double saved = x;
            x = saved + eps;
            const double up = loss();
            x = saved - eps;
            const double down = loss();
            x = saved;
            const double numeric = (up - down) / (2 * eps);
            const double a = g[t]->data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
            ++out.entries;
        }
    }
    return out;
}

}  // namespace planmae::testing
