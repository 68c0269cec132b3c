#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "planmae/raster.hpp"

namespace planmae {

/// Non-overlapping square patch tiling of an image.
struct PatchGrid {
    int patch_size = 0;
    int rows = 0;
    int cols = 0;

    int num_patches() const noexcept { return rows * cols; }
    int image_height() const noexcept { return rows * patch_size; }
    int image_width() const noexcept { return cols * patch_size; }

    /// Throws NonDivisiblePatchSize unless patch_size divides both sides.
    static PatchGrid for_image(int height, int width, int patch_size);

    bool operator==(const PatchGrid&) const = default;
};

/// Row-major sequence of flattened patches; patch i covers grid cell
/// (i / cols, i % cols) and stores its P x P x C block row-major.
struct PatchSequence {
    PatchGrid grid;
    int channels = 1;
    std::vector<std::vector<float>> patches;

    std::size_t patch_length() const noexcept {
        return static_cast<std::size_t>(grid.patch_size) * grid.patch_size * channels;
    }
    std::span<const float> patch(int i) const { return patches[static_cast<std::size_t>(i)]; }
};

PatchSequence patchify(const Raster& image, int patch_size);

/// Inverse of patchify. With clamp set, values are clipped to [0,1];
/// otherwise out-of-range values are rejected by the Raster invariant.
Raster unpatchify(const PatchSequence& seq, bool clamp = false);

}  // namespace planmae
