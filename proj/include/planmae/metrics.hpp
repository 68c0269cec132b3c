#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "planmae/masking.hpp"
#include "planmae/raster.hpp"

namespace planmae {

struct MetricPair {
    double psnr;  // dB, +inf for identical inputs
    double ssim;
};

/// 10 log10(peak^2 / MSE); +inf when MSE is zero.
double psnr(std::span<const float> a, std::span<const float> b, double peak = 1.0);
double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0);
double psnr(const Raster& a, const Raster& b, double peak = 1.0);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double peak = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over every full window position (stride 1, no padding) of a
/// normalized Gaussian window. Inputs are single-channel, row-major.
double ssim(std::span<const double> a, std::span<const double> b, int height, int width,
            const SsimParams& params = {});
/// Colored rasters are compared on their channel-mean luminance.
double ssim(const Raster& a, const Raster& b, const SsimParams& params = {});

struct EvalRow {
    StrategySpec spec;
    std::string method;     // e.g. "One-sided Masking"
    std::string data_mode;  // "Line Drawing" | "Colored"
    std::string fid = "n/a";
    double psnr = 0.0;        // full image, peak 1
    double ssim = 0.0;
    double realized_ratio = 0.0;
    double psnr_masked = 0.0;  // masked patches only
    std::size_t n_images = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    std::string to_csv() const;
    /// Aligned text table: Method, DATA, FID, PSNR, SSIM, realized_ratio,
    /// psnr_masked.
    std::string to_table() const;
};

/// Produces the reconstruction of `image` under `plan`.
using Reconstructor = std::function<Raster(const Raster& image, const MaskPlan& plan)>;

/// For each strategy: plan every image (random plans seeded from
/// (seed, image index)), reconstruct, score against the original, average.
EvalReport evaluate(const Reconstructor& reconstruct, const PatchGrid& grid,
                    const std::vector<Raster>& images, const std::vector<StrategySpec>& strategies,
                    std::uint64_t seed = 0);

/// random@0.80, center@0.30, perimeter@0.70, one_sided@0.30, corner@0.75.
std::vector<StrategySpec> default_eval_strategies();

std::string data_mode_label(Mode mode);

}  // namespace planmae
