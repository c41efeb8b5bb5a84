#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

//
// Non-overlapping s×s tiling of a matrix, patches stored in row-major grid
// order. A missing patch is represented by an empty optional.
//
struct PatchGrid {
    std::size_t patch_size = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<std::optional<Matrix>> patches;

    std::size_t count() const noexcept { return grid_rows * grid_cols; }
};

inline PatchGrid patchify(const Matrix& w, std::size_t s) {
    if (s == 0 || w.rows() % s != 0 || w.cols() % s != 0)
        throw tiling_error("patchify: patch size " + std::to_string(s) + " does not tile " +
                           std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    PatchGrid g;
    g.patch_size = s;
    g.grid_rows = w.rows() / s;
    g.grid_cols = w.cols() / s;
    g.patches.reserve(g.count());
    for (std::size_t gi = 0; gi < g.grid_rows; ++gi)
        for (std::size_t gj = 0; gj < g.grid_cols; ++gj) {
            Matrix p(s, s);
            for (std::size_t i = 0; i < s; ++i)
                for (std::size_t j = 0; j < s; ++j) p(i, j) = w(gi * s + i, gj * s + j);
            g.patches.emplace_back(std::move(p));
        }
    return g;
}

inline Matrix depatchify(const PatchGrid& g) {
    const std::size_t s = g.patch_size;
    if (g.patches.size() != g.count())
        throw structure_error("depatchify: grid declares " + std::to_string(g.count()) +
                              " patches, found " + std::to_string(g.patches.size()));
    Matrix w(g.grid_rows * s, g.grid_cols * s);
    for (std::size_t gi = 0; gi < g.grid_rows; ++gi)
        for (std::size_t gj = 0; gj < g.grid_cols; ++gj) {
            const auto& slot = g.patches[gi * g.grid_cols + gj];
            if (!slot)
                throw structure_error("depatchify: missing patch (" + std::to_string(gi) + ", " +
                                      std::to_string(gj) + ")");
            if (slot->rows() != s || slot->cols() != s)
                throw structure_error("depatchify: patch (" + std::to_string(gi) + ", " +
                                      std::to_string(gj) + ") has wrong shape");
            for (std::size_t i = 0; i < s; ++i)
                for (std::size_t j = 0; j < s; ++j) w(gi * s + i, gj * s + j) = (*slot)(i, j);
        }
    return w;
}

}  // namespace reallm
