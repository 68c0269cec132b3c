#include "planmae/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "planmae/error.hpp"
#include "planmae/patches.hpp"
#include "planmae/rng.hpp"

namespace planmae {

namespace {

template <typename V>
double psnr_impl(std::span<const V> a, std::span<const V> b, double peak) {
    if (a.size() != b.size() || a.empty()) {
        throw Error(ErrorCode::GeometryMismatch, "psnr inputs differ in size");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

void check_same(const Raster& a, const Raster& b) {
    if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
        throw Error(ErrorCode::GeometryMismatch, "metric inputs differ in geometry");
    }
}

// Filters `src` (height x width) with the separable 1D kernel, keeping only
// positions where the full window fits.
std::vector<double> filter_valid(const std::vector<double>& src, int height, int width,
                                 const std::vector<double>& kernel) {
    const int k = static_cast<int>(kernel.size());
    const int out_w = width - k + 1;
    const int out_h = height - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(height) * out_w);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += kernel[static_cast<std::size_t>(t)] * src[static_cast<std::size_t>(y) * width + x + t];
            rows[static_cast<std::size_t>(y) * out_w + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += kernel[static_cast<std::size_t>(t)] * rows[static_cast<std::size_t>(y + t) * out_w + x];
            out[static_cast<std::size_t>(y) * out_w + x] = s;
        }
    }
    return out;
}

}  // namespace

double psnr(std::span<const float> a, std::span<const float> b, double peak) {
    return psnr_impl(a, b, peak);
}

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
    return psnr_impl(a, b, peak);
}

double psnr(const Raster& a, const Raster& b, double peak) {
    check_same(a, b);
    return psnr(a.data(), b.data(), peak);
}

double ssim(std::span<const double> a, std::span<const double> b, int height, int width,
            const SsimParams& p) {
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(height) * width) {
        throw Error(ErrorCode::GeometryMismatch, "ssim inputs differ in size");
    }
    if (height < p.window || width < p.window) {
        throw Error(ErrorCode::TooSmall, "image smaller than the SSIM window");
    }
    // The 2D Gaussian window is the outer product of this normalized 1D one.
    std::vector<double> kernel(static_cast<std::size_t>(p.window));
    const double center = (p.window - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < p.window; ++i) {
        const double d = i - center;
        kernel[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * p.sigma * p.sigma));
        total += kernel[static_cast<std::size_t>(i)];
    }
    for (double& w : kernel) w /= total;

    const std::size_t n = a.size();
    std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = va[i] * va[i];
        bb[i] = vb[i] * vb[i];
        ab[i] = va[i] * vb[i];
    }
    const auto mu_a = filter_valid(va, height, width, kernel);
    const auto mu_b = filter_valid(vb, height, width, kernel);
    const auto e_aa = filter_valid(aa, height, width, kernel);
    const auto e_bb = filter_valid(bb, height, width, kernel);
    const auto e_ab = filter_valid(ab, height, width, kernel);

    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double var_a = e_aa[i] - ma * ma;
        const double var_b = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    return sum / static_cast<double>(mu_a.size());
}

double ssim(const Raster& a, const Raster& b, const SsimParams& params) {
    check_same(a, b);
    const auto la = a.luminance();
    const auto lb = b.luminance();
    return ssim(la, lb, a.height(), a.width(), params);
}

std::string data_mode_label(Mode mode) {
    return mode == Mode::colored ? "Colored" : "Line Drawing";
}

std::vector<StrategySpec> default_eval_strategies() {
    return {
        {Strategy::random, 0.80},
        {Strategy::center, 0.30},
        {Strategy::perimeter, 0.70},
        {Strategy::one_sided, 0.30, Side::left},
        {Strategy::corner, 0.75, Side::left, Anchor::tl},
    };
}

EvalReport evaluate(const Reconstructor& reconstruct, const PatchGrid& grid,
                    const std::vector<Raster>& images, const std::vector<StrategySpec>& strategies,
                    std::uint64_t seed) {
    if (images.empty()) throw Error(ErrorCode::EmptySplit, "no images to evaluate");
    for (const Raster& image : images) {
        if (image.height() != grid.image_height() || image.width() != grid.image_width()) {
            throw Error(ErrorCode::GeometryMismatch, "evaluation image does not match model geometry");
        }
    }
    EvalReport report;
    for (const StrategySpec& spec : strategies) {
        EvalRow row;
        row.spec = spec;
        row.method = method_label(spec.strategy);
        row.data_mode = data_mode_label(images.front().mode());
        row.n_images = images.size();
        for (std::size_t i = 0; i < images.size(); ++i) {
            const Raster& original = images[i];
            const MaskPlan plan = spec.plan(grid, derive_seed(seed, i));
            const Raster recon = reconstruct(original, plan);
            row.psnr += psnr(recon, original);
            row.ssim += ssim(recon, original);
            row.realized_ratio += plan.realized_ratio();

            // Masked-region PSNR: compare only pixels inside masked patches.
            const auto a = patchify(recon, grid.patch_size);
            const auto b = patchify(original, grid.patch_size);
            std::vector<float> ma, mb;
            for (int idx : plan.masked) {
                const auto pa = a.patch(idx);
                const auto pb = b.patch(idx);
                ma.insert(ma.end(), pa.begin(), pa.end());
                mb.insert(mb.end(), pb.begin(), pb.end());
            }
            row.psnr_masked += ma.empty() ? std::numeric_limits<double>::infinity()
                                          : psnr(std::span<const float>(ma), std::span<const float>(mb));
        }
        const auto n = static_cast<double>(images.size());
        row.psnr /= n;
        row.ssim /= n;
        row.realized_ratio /= n;
        row.psnr_masked /= n;
        report.rows.push_back(row);
    }
    return report;
}

namespace {

std::string fmt_num(double v, int precision) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

}  // namespace

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "method,data,fid,psnr,ssim,realized_ratio,psnr_masked,n_images,strategy\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.data_mode << ',' << r.fid << ',' << fmt_num(r.psnr, 4) << ','
            << fmt_num(r.ssim, 4) << ',' << fmt_num(r.realized_ratio, 4) << ','
            << fmt_num(r.psnr_masked, 4) << ',' << r.n_images << ',' << r.spec.to_string() << '\n';
    }
    return out.str();
}

std::string EvalReport::to_table() const {
    const std::vector<std::string> header{"Method", "DATA", "FID", "PSNR", "SSIM", "realized_ratio",
                                          "psnr_masked"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        cells.push_back({r.method, r.data_mode, r.fid, fmt_num(r.psnr, 4), fmt_num(r.ssim, 4),
                         fmt_num(r.realized_ratio, 4), fmt_num(r.psnr_masked, 4)});
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 == row.size()) {
                out << '\n';
            } else {
                out << std::string(width[c] - row[c].size() + 2, ' ');
            }
        }
    };
    line(header);
    for (const auto& row : cells) line(row);
    return out.str();
}

}  // namespace planmae
