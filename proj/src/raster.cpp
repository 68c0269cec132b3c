#include "planmae/raster.hpp"

#include <string>

#include "planmae/error.hpp"

namespace planmae {

std::string_view to_string(Mode mode) {
    return mode == Mode::colored ? "colored" : "line_drawing";
}

Mode mode_from_string(std::string_view text) {
    if (text == "colored" || text == "color") return Mode::colored;
    if (text == "line_drawing" || text == "line") return Mode::line_drawing;
    throw Error(ErrorCode::BadConfig, "unknown mode '" + std::string(text) + "'");
}

int channels_for(Mode mode) { return mode == Mode::colored ? 3 : 1; }

Raster::Raster(int height, int width, Mode mode, std::vector<float> data)
    : height_(height), width_(width), mode_(mode), data_(std::move(data)) {
    if (height <= 0 || width <= 0) {
        throw Error(ErrorCode::GeometryMismatch, "raster dimensions must be positive");
    }
    const auto expected = static_cast<std::size_t>(height) * width * channels_for(mode);
    if (data_.size() != expected) {
        throw Error(ErrorCode::GeometryMismatch,
                    "raster data length " + std::to_string(data_.size()) + " != " +
                        std::to_string(expected));
    }
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw Error(ErrorCode::GeometryMismatch, "raster value outside [0,1]");
        }
    }
}

Raster::Raster(int height, int width, Mode mode, float fill)
    : Raster(height, width, mode,
             std::vector<float>(static_cast<std::size_t>(height > 0 ? height : 0) *
                                    (width > 0 ? width : 0) * channels_for(mode),
                                fill)) {}

void Raster::set(int y, int x, int c, float v) {
    if (!(v >= 0.0f && v <= 1.0f)) {
        throw Error(ErrorCode::GeometryMismatch, "raster value outside [0,1]");
    }
    data_[index(y, x, c)] = v;
}

std::vector<double> Raster::luminance() const {
    const int ch = channels();
    std::vector<double> out(static_cast<std::size_t>(height_) * width_);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sum = 0.0;
        for (int c = 0; c < ch; ++c) sum += data_[i * ch + c];
        out[i] = sum / ch;
    }
    return out;
}

}  // namespace planmae
