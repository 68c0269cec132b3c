#include "doctest.h"

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "planmae/error.hpp"
#include "planmae/metrics.hpp"

using namespace planmae;
using testing::naive_psnr;
using testing::naive_ssim;

namespace {

std::vector<double> random_image(Rng& rng, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform();
    return v;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr fixed cases") {
    const std::vector<double> a(64, 0.3);
    CHECK(std::isinf(psnr(std::span<const double>(a), std::span<const double>(a))));
    std::vector<double> b = a;
    for (double& v : b) v += 0.1;  // squared error 0.01 everywhere
    CHECK(psnr(std::span<const double>(a), std::span<const double>(b)) == doctest::Approx(20.0).epsilon(1e-12));

    std::vector<double> c(100), d(100);
    for (int i = 0; i < 100; ++i) {
        c[static_cast<std::size_t>(i)] = i;
        d[static_cast<std::size_t>(i)] = i + 1;
    }
    const double db = psnr(std::span<const double>(c), std::span<const double>(d), 255.0);
    CHECK(std::abs(db - 48.1308) < 5e-5);
    CHECK(std::abs(db - 20.0 * std::log10(255.0)) < 1e-12);
}

TEST_CASE("ssim identities") {
    Rng rng(1);
    const auto a = random_image(rng, 16 * 16);
    CHECK(ssim(a, a, 16, 16) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> half(16 * 16, 0.5);
    CHECK(ssim(half, half, 16, 16) == 1.0);
}

TEST_CASE("psnr and ssim match naive references on random pairs") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const int h = 11 + static_cast<int>(rng.below(14)), w = 11 + static_cast<int>(rng.below(14));
        const auto a = random_image(rng, h * w);
        auto b = a;
        const double noise = 0.02 + 0.3 * rng.uniform();
        for (double& v : b) v = std::clamp(v + noise * rng.normal(), 0.0, 1.0);
        CHECK(std::abs(psnr(std::span<const double>(a), std::span<const double>(b)) - naive_psnr(a, b, 1.0)) < 1e-9);
        CHECK(std::abs(ssim(a, b, h, w) - naive_ssim(a, b, h, w)) < 1e-9);
    }
}

TEST_CASE("two fixed 16x16 patterns") {
    std::vector<double> stripes(256), checker(256);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            stripes[static_cast<std::size_t>(y * 16 + x)] = (x / 2) % 2 ? 0.9 : 0.1;
            checker[static_cast<std::size_t>(y * 16 + x)] = ((x / 4) + (y / 4)) % 2 ? 0.75 : 0.25;
        }
    CHECK(std::abs(ssim(stripes, checker, 16, 16) - naive_ssim(stripes, checker, 16, 16)) < 1e-9);
}

TEST_CASE("ssim is symmetric, bounded, and drops with noise") {
    Rng rng(3);
    const auto a = random_image(rng, 32 * 32);
    double previous = 1.0;
    for (double noise : {0.01, 0.05, 0.1, 0.2, 0.4}) {
        auto b = a;
        Rng n(4);
        for (double& v : b) v = std::clamp(v + noise * n.normal(), 0.0, 1.0);
        const double s = ssim(a, b, 32, 32);
        CHECK(s == doctest::Approx(ssim(b, a, 32, 32)).epsilon(1e-14));
        CHECK(s <= 1.0);
        CHECK(s >= -1.0);
        CHECK(s < previous);
        previous = s;
    }
}

TEST_CASE("ssim needs at least one full window") {
    const std::vector<double> a(10 * 20, 0.5);
    try {
        ssim(a, a, 10, 20);
        FAIL("expected TooSmall");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooSmall);
    }
}

TEST_CASE("identity reconstructor scores inf and 1 for every strategy") {
    Rng rng(5);
    std::vector<Raster> images;
    for (int i = 0; i < 3; ++i) images.push_back(testing::random_raster(rng, 32, 32, Mode::colored));
    const auto grid = PatchGrid::for_image(32, 32, 8);
    const auto report = evaluate([](const Raster& img, const MaskPlan&) { return img; }, grid, images,
                                 default_eval_strategies(), 1);
    REQUIRE(report.rows.size() == 5);
    for (const auto& row : report.rows) {
        CHECK(std::isinf(row.psnr));
        CHECK(row.ssim == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(row.n_images == 3);
        CHECK(row.data_mode == "Colored");
        CHECK(row.fid == "n/a");
    }
    CHECK(report.rows[0].method == "Random Masking");
    CHECK(report.rows[3].realized_ratio == doctest::Approx(5.0 / 16.0));  // round(0.3*16)=5
    const auto table = report.to_table();
    CHECK(table.find("One-sided Masking") != std::string::npos);
    CHECK(table.find("Colored") != std::string::npos);
    const auto csv = report.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("evaluation scores the composite against the original") {
    Rng rng(6);
    std::vector<Raster> images{testing::random_raster(rng, 16, 16, Mode::line_drawing)};
    const auto grid = PatchGrid::for_image(16, 16, 4);
    // masked patches filled with 0.5
    auto gray = [&](const Raster& img, const MaskPlan& plan) {
        auto seq = patchify(img, 4);
        for (int i : plan.masked) seq.patches[static_cast<std::size_t>(i)].assign(16, 0.5f);
        return unpatchify(seq);
    };
    const auto report = evaluate(gray, grid, images, {StrategySpec::parse("one_sided:0.5:left")});
    const auto expected = gray(images[0], plan_one_sided(grid, 0.5, Side::left));
    CHECK(report.rows[0].psnr == doctest::Approx(psnr(images[0], expected)).epsilon(1e-12));
    CHECK(report.rows[0].ssim == doctest::Approx(ssim(images[0], expected)).epsilon(1e-12));
    // masked-only psnr is over half the pixels with the same squared error sum
    CHECK(report.rows[0].psnr_masked == doctest::Approx(report.rows[0].psnr - 10 * std::log10(2.0)).epsilon(1e-9));
}

TEST_CASE("evaluation rejects empty splits and wrong geometry") {
    const auto grid = PatchGrid::for_image(16, 16, 4);
    auto id = [](const Raster& img, const MaskPlan&) { return img; };
    try {
        evaluate(id, grid, {}, default_eval_strategies());
        FAIL("expected EmptySplit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptySplit);
    }
    CHECK_THROWS_AS(evaluate(id, grid, {Raster(8, 8, Mode::line_drawing, 0.0f)}, default_eval_strategies()), Error);
}

TEST_CASE("default strategy list") {
    const auto s = default_eval_strategies();
    REQUIRE(s.size() == 5);
    CHECK(s[0].to_string() == StrategySpec::parse("random:0.8").to_string());
    CHECK(s[1].ratio == 0.3);
    CHECK(s[2].ratio == 0.7);
    CHECK(s[3].strategy == Strategy::one_sided);
    CHECK(s[3].ratio == 0.3);
    CHECK(s[4].strategy == Strategy::corner);
    CHECK(s[4].ratio == 0.75);
}

}
