#include "planmae/patches.hpp"

#include <algorithm>
#include <string>

#include "planmae/error.hpp"

namespace planmae {

PatchGrid PatchGrid::for_image(int height, int width, int patch_size) {
    if (patch_size <= 0 || height <= 0 || width <= 0 || height % patch_size != 0 ||
        width % patch_size != 0) {
        throw Error(ErrorCode::NonDivisiblePatchSize,
                    "patch size " + std::to_string(patch_size) + " does not divide " +
                        std::to_string(height) + "x" + std::to_string(width));
    }
    return PatchGrid{patch_size, height / patch_size, width / patch_size};
}

PatchSequence patchify(const Raster& image, int patch_size) {
    const PatchGrid grid = PatchGrid::for_image(image.height(), image.width(), patch_size);
    const int ch = image.channels();
    const auto src = image.data();

    PatchSequence seq{grid, ch, {}};
    seq.patches.reserve(static_cast<std::size_t>(grid.num_patches()));
    const std::size_t row_len = static_cast<std::size_t>(patch_size) * ch;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            std::vector<float> patch;
            patch.reserve(seq.patch_length());
            for (int py = 0; py < patch_size; ++py) {
                const auto begin = image.index(r * patch_size + py, c * patch_size, 0);
                patch.insert(patch.end(), src.begin() + static_cast<std::ptrdiff_t>(begin),
                             src.begin() + static_cast<std::ptrdiff_t>(begin + row_len));
            }
            seq.patches.push_back(std::move(patch));
        }
    }
    return seq;
}

Raster unpatchify(const PatchSequence& seq, bool clamp) {
    const PatchGrid& g = seq.grid;
    if (g.patch_size <= 0 || g.rows <= 0 || g.cols <= 0 ||
        (seq.channels != 1 && seq.channels != 3)) {
        throw Error(ErrorCode::InconsistentSequence, "invalid grid geometry");
    }
    if (seq.patches.size() != static_cast<std::size_t>(g.num_patches())) {
        throw Error(ErrorCode::InconsistentSequence,
                    "grid expects " + std::to_string(g.num_patches()) + " patches, got " +
                        std::to_string(seq.patches.size()));
    }
    const std::size_t len = seq.patch_length();
    const int height = g.image_height();
    const int width = g.image_width();
    const int ch = seq.channels;
    std::vector<float> data(static_cast<std::size_t>(height) * width * ch);
    for (int i = 0; i < g.num_patches(); ++i) {
        const auto& patch = seq.patches[static_cast<std::size_t>(i)];
        if (patch.size() != len) {
            throw Error(ErrorCode::InconsistentSequence,
                        "patch " + std::to_string(i) + " has length " +
                            std::to_string(patch.size()));
        }
        const int r = i / g.cols;
        const int c = i % g.cols;
        for (int py = 0; py < g.patch_size; ++py) {
            const std::size_t dst =
                (static_cast<std::size_t>(r * g.patch_size + py) * width + c * g.patch_size) * ch;
            const std::size_t src = static_cast<std::size_t>(py) * g.patch_size * ch;
            std::copy_n(patch.begin() + static_cast<std::ptrdiff_t>(src), g.patch_size * ch,
                        data.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    if (clamp) {
        for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
    }
    return Raster(height, width, ch == 3 ? Mode::colored : Mode::line_drawing, std::move(data));
}

}  // namespace planmae
