#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace planmae {

enum class Mode { colored, line_drawing };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);
int channels_for(Mode mode);

/// Height x width x channels image with values in [0,1], stored row-major
/// with channels interleaved. Line drawings are single channel, colored
/// plans are RGB.
class Raster {
public:
    Raster() = default;
    Raster(int height, int width, Mode mode, std::vector<float> data);
    /// Filled with a constant value.
    Raster(int height, int width, Mode mode, float fill);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_for(mode_); }
    Mode mode() const noexcept { return mode_; }

    std::span<const float> data() const noexcept { return data_; }

    float at(int y, int x, int c = 0) const {
        return data_[index(y, x, c)];
    }
    void set(int y, int x, int c, float v);

    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels() + c;
    }

    /// Per-pixel channel mean; identity for single-channel rasters.
    std::vector<double> luminance() const;

    bool operator==(const Raster&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    Mode mode_ = Mode::line_drawing;
    std::vector<float> data_;
};

}  // namespace planmae
