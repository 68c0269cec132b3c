#pragma once

#include <span>
#include <vector>

#include "planmae/patches.hpp"

namespace planmae {

/// Fixed 2D sine-cosine positional embeddings, one row of width `dim` per
/// patch. The first dim/2 entries encode the column, the last dim/2 the
/// row; within each half entries alternate sin/cos at frequencies
/// 1 / 10000^(2k / (dim/2)).
class PosEmbedTable {
public:
    PosEmbedTable(const PatchGrid& grid, int dim);

    int dim() const noexcept { return dim_; }
    int size() const noexcept { return count_; }
    std::span<const double> row(int patch) const {
        return {values_.data() + static_cast<std::size_t>(patch) * dim_,
                static_cast<std::size_t>(dim_)};
    }

    bool operator==(const PosEmbedTable&) const = default;

private:
    int dim_;
    int count_;
    std::vector<double> values_;
};

PosEmbedTable pos_embed(const PatchGrid& grid, int dim);

}  // namespace planmae
