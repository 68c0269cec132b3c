#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "planmae/raster.hpp"

namespace planmae {

/// 8-bit PNG codec. Samples map to [0,1] by v/255 on decode and back by
/// round(v*255) on encode. Gray and gray+alpha decode to line drawings,
/// RGB/RGBA/palette to colored rasters; alpha is dropped.
std::vector<std::uint8_t> encode_png(const Raster& image);
Raster decode_png(std::span<const std::uint8_t> bytes);

void write_png(const Raster& image, const std::filesystem::path& path);

/// Loads a PNG. When `expected_size` is set the image must be exactly that
/// square size unless `resize` is true, in which case it is resampled
/// (nearest neighbour). `mode`, when set, converts channels to match.
Raster read_png(const std::filesystem::path& path, std::optional<int> expected_size = std::nullopt,
                bool resize = false, std::optional<Mode> mode = std::nullopt);

/// Nearest-neighbour resample to size x size.
Raster resize_nearest(const Raster& image, int size);
/// Channel conversion: RGB -> gray by channel mean, gray -> RGB by copy.
Raster convert_mode(const Raster& image, Mode mode);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws BadImage on characters outside the standard alphabet or bad
/// padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace planmae
