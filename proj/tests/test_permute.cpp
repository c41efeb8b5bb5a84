#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "reallm/matrix.hpp"
#include "reallm/permute.hpp"

using namespace reallm;

TEST(PermuteColumns, SingleColumnIsIdentity) {
    const Matrix w = gaussian_matrix(128, 1, 1);
    const auto pb = permute_columns(w);
    EXPECT_EQ(pb.perm.forward, std::vector<std::uint32_t>{0});
    EXPECT_EQ(pb.block, w);
}

TEST(PermuteColumns, GroupsOrthogonalPairs) {
    // columns [a, b, a, b] with a ⊥ b unit vectors
    Matrix w(4, 4);
    for (std::size_t j : {0, 2}) w(0, j) = 1.0;
    for (std::size_t j : {1, 3}) w(1, j) = 1.0;
    const auto pb = permute_columns(w);
    EXPECT_EQ(pb.perm.forward, (std::vector<std::uint32_t>{0, 2, 1, 3}));
    for (std::size_t j : {0, 1}) EXPECT_EQ(pb.block(0, j), 1.0);
    for (std::size_t j : {2, 3}) EXPECT_EQ(pb.block(1, j), 1.0);
}

TEST(PermuteColumns, TieGoesToSmallestCandidate) {
    // every remaining column is equidistant from the first
    Matrix w(3, 3);
    w(1, 1) = 1.0;
    w(2, 2) = 1.0;
    EXPECT_EQ(permute_columns(w).perm.forward, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(PermuteColumns, RoundTripAndMultisetProperty) {
    Rng rng = make_rng(33);
    std::uniform_int_distribution<int> rows(1, 16), cols(1, 24);
    for (int t = 0; t < 1000; ++t) {
        const Matrix w = gaussian_matrix(rows(rng), cols(rng), rng);
        const auto pb = permute_columns(w);
        pb.perm.validate(w.cols());
        EXPECT_EQ(apply_inverse(pb.block, pb.perm), w);
        EXPECT_EQ(apply_permutation(w, pb.perm), pb.block);
        auto f = pb.perm.forward;
        std::sort(f.begin(), f.end());
        for (std::size_t j = 0; j < f.size(); ++j) ASSERT_EQ(f[j], j);
    }
}

TEST(PermuteStrips, RoundTripWithPartialStrip) {
    Rng rng = make_rng(4);
    for (auto [p, q, rows] : {std::tuple{300, 20, 128}, std::tuple{64, 9, 16}, std::tuple{5, 7, 8}}) {
        const Matrix w = gaussian_matrix(p, q, rng);
        const auto ps = permute_strips(w, rows);
        EXPECT_EQ(ps.perms.size(), strip_count(p, rows));
        EXPECT_EQ(inverse_strips(ps.matrix, ps.perms, rows), w);
    }
}

TEST(ApplyInverse, IdentityPermutationIsIdentityMap) {
    const Matrix w = gaussian_matrix(6, 5, 2);
    EXPECT_EQ(apply_inverse(w, ColumnPermutation::identity(5)), w);
}

TEST(ApplyInverse, InvalidPermutationIsStructureError) {
    const Matrix w = gaussian_matrix(3, 4, 2);
    auto p = ColumnPermutation::identity(4);
    p.forward[1] = 0;
    EXPECT_THROW(apply_inverse(w, p), structure_error);
    EXPECT_THROW(apply_inverse(w, ColumnPermutation::identity(3)), structure_error);
    EXPECT_THROW(ColumnPermutation::from_inverse({0, 0, 1}), structure_error);
}

TEST(PermutationBitCost, FormulaValues) {
    EXPECT_EQ(permutation_bit_cost(4096, 128), Rational(3, 32));
    EXPECT_EQ(permutation_bit_cost(4096, 128).to_double(), 0.09375);
    EXPECT_EQ(permutation_bit_cost(2, 128).to_double(), 0.0078125);
    EXPECT_EQ(permutation_bit_cost(1024, 128).to_double(), 0.078125);
    EXPECT_THROW(permutation_bit_cost(1, 128), parameter_error);
}
