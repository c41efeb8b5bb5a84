#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "reallm/bitpack.hpp"
#include "reallm/errors.hpp"
#include "reallm/matrix.hpp"
#include "reallm/rational.hpp"

namespace reallm {

constexpr std::size_t default_permutation_rows = 128;

//
// forward[j] is the source column placed at position j;
// inverse[c] is the position that source column c moved to.
//
struct ColumnPermutation {
    std::vector<std::uint32_t> forward;
    std::vector<std::uint32_t> inverse;
    std::size_t block_rows = default_permutation_rows;

    std::size_t size() const noexcept { return forward.size(); }

    static ColumnPermutation identity(std::size_t q, std::size_t block_rows = default_permutation_rows) {
        ColumnPermutation p;
        p.block_rows = block_rows;
        p.forward.resize(q);
        for (std::size_t j = 0; j < q; ++j) p.forward[j] = static_cast<std::uint32_t>(j);
        p.inverse = p.forward;
        return p;
    }

    static ColumnPermutation from_inverse(std::vector<std::uint32_t> inverse,
                                          std::size_t block_rows = default_permutation_rows) {
        ColumnPermutation p;
        p.block_rows = block_rows;
        p.forward.assign(inverse.size(), std::numeric_limits<std::uint32_t>::max());
        for (std::size_t c = 0; c < inverse.size(); ++c) {
            if (inverse[c] >= inverse.size() ||
                p.forward[inverse[c]] != std::numeric_limits<std::uint32_t>::max())
                throw structure_error("permutation: stored inverse is not a bijection");
            p.forward[inverse[c]] = static_cast<std::uint32_t>(c);
        }
        p.inverse = std::move(inverse);
        return p;
    }

    void validate(std::size_t q) const {
        if (forward.size() != q || inverse.size() != q)
            throw structure_error("permutation: expected " + std::to_string(q) + " columns, got " +
                                  std::to_string(forward.size()));
        for (std::size_t j = 0; j < q; ++j) {
            if (forward[j] >= q || inverse[forward[j]] != j)
                throw structure_error("permutation: forward and inverse disagree at " +
                                      std::to_string(j));
        }
    }

    friend bool operator==(const ColumnPermutation&, const ColumnPermutation&) = default;
};

struct PermutedBlock {
    Matrix block;
    ColumnPermutation perm;
};

//
// Greedy nearest-neighbour chain: for each position j, the closest remaining
// column (Euclidean, smallest position on ties) is swapped into j+1.
//
inline PermutedBlock permute_columns(const Matrix& w) {
    const std::size_t rows = w.rows();
    const std::size_t q = w.cols();

    // column-major working copy
    std::vector<std::vector<double>> cols(q, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < q; ++j) cols[j][i] = w(i, j);

    PermutedBlock out;
    out.perm = ColumnPermutation::identity(q, rows);
    auto& fwd = out.perm.forward;

    for (std::size_t j = 0; j + 1 < q; ++j) {
        const auto& cur = cols[j];
        std::size_t best = j + 1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = j + 1; k < q; ++k) {
            const auto& cand = cols[k];
            double d = 0.0;
            for (std::size_t i = 0; i < rows && d < best_d; ++i) {
                const double t = cur[i] - cand[i];
                d += t * t;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        if (best != j + 1) {
            std::swap(cols[j + 1], cols[best]);
            std::swap(fwd[j + 1], fwd[best]);
        }
    }
    for (std::size_t j = 0; j < q; ++j) out.perm.inverse[fwd[j]] = static_cast<std::uint32_t>(j);

    out.block = Matrix(rows, q);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < q; ++j) out.block(i, j) = cols[j][i];
    return out;
}

inline Matrix apply_permutation(const Matrix& w, const ColumnPermutation& perm) {
    perm.validate(w.cols());
    Matrix out(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, perm.forward[j]);
    return out;
}

inline Matrix apply_inverse(const Matrix& permuted, const ColumnPermutation& perm) {
    perm.validate(permuted.cols());
    Matrix out(permuted.rows(), permuted.cols());
    for (std::size_t i = 0; i < permuted.rows(); ++i)
        for (std::size_t j = 0; j < permuted.cols(); ++j) out(i, perm.forward[j]) = permuted(i, j);
    return out;
}

//
// Whole-matrix form: strips of `block_rows` rows (the last one may be
// shorter), each permuted independently with its own stored permutation.
//
struct PermutedStrips {
    Matrix matrix;
    std::vector<ColumnPermutation> perms;
};

inline std::size_t strip_count(std::size_t rows, std::size_t block_rows) {
    return (rows + block_rows - 1) / block_rows;
}

inline PermutedStrips permute_strips(const Matrix& w, std::size_t block_rows = default_permutation_rows) {
    if (block_rows < 1) throw parameter_error("permute_strips: block_rows must be ≥ 1");
    PermutedStrips out;
    out.matrix = Matrix(w.rows(), w.cols());
    for (std::size_t s = 0; s < strip_count(w.rows(), block_rows); ++s) {
        const std::size_t lo = s * block_rows;
        const std::size_t hi = std::min(w.rows(), lo + block_rows);
        Matrix strip(hi - lo, w.cols());
        for (std::size_t i = lo; i < hi; ++i)
            std::copy(w.row(i).begin(), w.row(i).end(), strip.row(i - lo).begin());
        auto pb = permute_columns(strip);
        pb.perm.block_rows = block_rows;
        for (std::size_t i = lo; i < hi; ++i)
            std::copy(pb.block.row(i - lo).begin(), pb.block.row(i - lo).end(),
                      out.matrix.row(i).begin());
        out.perms.push_back(std::move(pb.perm));
    }
    return out;
}

inline Matrix inverse_strips(const Matrix& permuted, const std::vector<ColumnPermutation>& perms,
                             std::size_t block_rows) {
    if (perms.size() != strip_count(permuted.rows(), block_rows))
        throw structure_error("inverse_strips: expected " +
                              std::to_string(strip_count(permuted.rows(), block_rows)) +
                              " strip permutations, got " + std::to_string(perms.size()));
    Matrix out(permuted.rows(), permuted.cols());
    for (std::size_t s = 0; s < perms.size(); ++s) {
        const auto& perm = perms[s];
        perm.validate(permuted.cols());
        const std::size_t lo = s * block_rows;
        const std::size_t hi = std::min(permuted.rows(), lo + block_rows);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < permuted.cols(); ++j) out(i, perm.forward[j]) = permuted(i, j);
    }
    return out;
}

// stored bits per coordinate: q indices of ceil(log2 q) bits per rows×q block
inline Rational permutation_bit_cost(std::size_t q, std::size_t rows_per_block) {
    if (q < 2) throw parameter_error("permutation_bit_cost: q must be ≥ 2");
    if (rows_per_block < 1) throw parameter_error("permutation_bit_cost: rows_per_block must be ≥ 1");
    const auto qq = static_cast<std::int64_t>(q);
    return Rational(qq * index_bits(q), static_cast<std::int64_t>(rows_per_block) * qq);
}

}  // namespace reallm
