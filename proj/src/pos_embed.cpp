#include "planmae/pos_embed.hpp"

#include <cmath>
#include <string>

#include "planmae/error.hpp"

namespace planmae {

namespace {

void encode_axis(double position, int half, double* out) {
    for (int k = 0; k < half / 2; ++k) {
        const double freq = 1.0 / std::pow(10000.0, 2.0 * k / half);
        out[2 * k] = std::sin(position * freq);
        out[2 * k + 1] = std::cos(position * freq);
    }
}

}  // namespace

PosEmbedTable::PosEmbedTable(const PatchGrid& grid, int dim)
    : dim_(dim), count_(grid.num_patches()) {
    if (dim <= 0 || dim % 4 != 0) {
        throw Error(ErrorCode::BadDim, "embedding dim " + std::to_string(dim) +
                                           " must be a positive multiple of 4");
    }
    values_.resize(static_cast<std::size_t>(count_) * dim_);
    const int half = dim / 2;
    for (int i = 0; i < count_; ++i) {
        double* row = values_.data() + static_cast<std::size_t>(i) * dim_;
        encode_axis(i % grid.cols, half, row);
        encode_axis(i / grid.cols, half, row + half);
    }
}

PosEmbedTable pos_embed(const PatchGrid& grid, int dim) { return PosEmbedTable(grid, dim); }

}  // namespace planmae
