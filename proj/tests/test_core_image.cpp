#include "doctest.h"

#include <chrono>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "planmae/error.hpp"
#include "planmae/patches.hpp"
#include "planmae/pos_embed.hpp"

using namespace planmae;

TEST_SUITE("core_image") {

TEST_CASE("4x4 image with P=2 gives four 2x2 patches, row-major") {
    std::vector<float> px(16);
    for (int i = 0; i < 16; ++i) px[static_cast<std::size_t>(i)] = static_cast<float>(i) / 16.0f;
    const Raster img(4, 4, Mode::line_drawing, px);
    const auto seq = patchify(img, 2);
    REQUIRE(seq.patches.size() == 4);
    CHECK(seq.patch_length() == 4);
    // patch 0 = pixels (0,0),(0,1),(1,0),(1,1)
    CHECK(seq.patches[0] == std::vector<float>{px[0], px[1], px[4], px[5]});
    CHECK(seq.patches[3] == std::vector<float>{px[10], px[11], px[14], px[15]});
}

TEST_CASE("P equal to the image side gives one patch holding the whole image") {
    Rng rng(3);
    const auto img = testing::random_raster(rng, 8, 8, Mode::colored);
    const auto seq = patchify(img, 8);
    REQUIRE(seq.patches.size() == 1);
    CHECK(std::equal(seq.patches[0].begin(), seq.patches[0].end(), img.data().begin()));
}

TEST_CASE("patch size must divide the image") {
    const Raster img(6, 6, Mode::line_drawing, 0.5f);
    try {
        patchify(img, 4);
        FAIL("expected NonDivisiblePatchSize");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonDivisiblePatchSize);
    }
}

TEST_CASE("roundtrip is bitwise exact on random rasters") {
    Rng rng(11);
    const auto start = std::chrono::steady_clock::now();
    for (int t = 0; t < 100; ++t) {
        const int p = std::array{4, 8, 16}[static_cast<std::size_t>(t % 3)];
        const int rows = 1 + static_cast<int>(rng.below(4));
        const int cols = 1 + static_cast<int>(rng.below(4));
        const Mode mode = (t % 2) ? Mode::colored : Mode::line_drawing;
        const auto img = testing::random_raster(rng, rows * p, cols * p, mode);
        CHECK(unpatchify(patchify(img, p)) == img);
    }
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    CHECK(took.count() < 10.0);
}

TEST_CASE("every pixel lands in exactly one patch slot") {
    // Tag each pixel with its own flat index and read the tags back out of
    // the patches; the multiset must be a permutation of all indices.
    const int h = 12, w = 8, p = 4;
    std::vector<float> px(static_cast<std::size_t>(h * w * 3));
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i) / px.size();
    const Raster img(h, w, Mode::colored, px);
    const auto seq = patchify(img, p);
    std::set<float> seen;
    for (int i = 0; i < seq.grid.num_patches(); ++i) {
        const int r0 = (i / seq.grid.cols) * p, c0 = (i % seq.grid.cols) * p;
        std::size_t k = 0;
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
                for (int c = 0; c < 3; ++c) {
                    CHECK(seq.patches[static_cast<std::size_t>(i)][k++] == img.at(r0 + y, c0 + x, c));
                }
        seen.insert(seq.patches[static_cast<std::size_t>(i)].begin(),
                    seq.patches[static_cast<std::size_t>(i)].end());
    }
    CHECK(seen.size() == px.size());
}

TEST_CASE("unpatchify clamps out-of-range values when asked") {
    PatchSequence seq;
    seq.grid = PatchGrid::for_image(2, 2, 2);
    seq.patches = {{1.3f, 0.2f, -0.4f, 0.9f}};
    const auto img = unpatchify(seq, true);
    CHECK(img.at(0, 0) == 1.0f);
    CHECK(img.at(1, 0) == 0.0f);
    CHECK(img.at(1, 1) == 0.9f);
}

TEST_CASE("sequence with the wrong patch count is rejected") {
    PatchSequence seq;
    seq.grid = PatchGrid::for_image(4, 4, 2);
    seq.patches.assign(3, std::vector<float>(4, 0.0f));
    try {
        unpatchify(seq);
        FAIL("expected InconsistentSequence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InconsistentSequence);
    }
    seq.patches.assign(4, std::vector<float>(3, 0.0f));
    CHECK_THROWS_AS(unpatchify(seq), Error);
}

TEST_CASE("positional table: origin row is sin 0 / cos 1") {
    const auto grid = PatchGrid::for_image(32, 32, 8);
    for (int d : {4, 8, 64}) {
        const PosEmbedTable table(grid, d);
        const auto row = table.row(0);
        for (int i = 0; i < d; ++i) CHECK(row[static_cast<std::size_t>(i)] == (i % 2 ? 1.0 : 0.0));
    }
}

TEST_CASE("positional table matches the closed form and is deterministic") {
    const auto grid = PatchGrid::for_image(24, 40, 8);  // 3 x 5
    const int d = 16, half = 8;
    const PosEmbedTable table(grid, d);
    CHECK(table == pos_embed(grid, d));
    for (int i = 0; i < grid.num_patches(); ++i) {
        const double pos[2] = {static_cast<double>(i % grid.cols), static_cast<double>(i / grid.cols)};
        for (int h = 0; h < 2; ++h)
            for (int k = 0; k < half / 2; ++k) {
                const double f = 1.0 / std::pow(10000.0, 2.0 * k / half);
                const auto row = table.row(i);
                CHECK(row[static_cast<std::size_t>(h * half + 2 * k)] == doctest::Approx(std::sin(pos[h] * f)).epsilon(1e-12));
                CHECK(row[static_cast<std::size_t>(h * half + 2 * k + 1)] == doctest::Approx(std::cos(pos[h] * f)).epsilon(1e-12));
            }
    }
}

TEST_CASE("positional rows are pairwise distinct") {
    const auto grid = PatchGrid::for_image(256, 256, 16);
    const PosEmbedTable table(grid, 32);
    std::set<std::vector<double>> rows;
    for (int i = 0; i < table.size(); ++i) {
        const auto r = table.row(i);
        rows.emplace(r.begin(), r.end());
    }
    CHECK(rows.size() == static_cast<std::size_t>(grid.num_patches()));
}

TEST_CASE("embedding width must be a positive multiple of four") {
    const auto grid = PatchGrid::for_image(8, 8, 4);
    for (int d : {6, 0, -4, 2}) {
        try {
            PosEmbedTable t(grid, d);
            FAIL("expected BadDim");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BadDim);
        }
    }
}

TEST_CASE("rasters reject values outside [0,1] and wrong lengths") {
    CHECK_THROWS_AS(Raster(2, 2, Mode::line_drawing, std::vector<float>(4, 1.5f)), Error);
    CHECK_THROWS_AS(Raster(2, 2, Mode::colored, std::vector<float>(4, 0.5f)), Error);
    CHECK_NOTHROW(Raster(2, 2, Mode::colored, std::vector<float>(12, 0.5f)));
}

}
