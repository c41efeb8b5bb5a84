#include <gtest/gtest.h>

#include "reallm/matrix.hpp"
#include "reallm/quantizer.hpp"

using namespace reallm;

TEST(TargetKind, NamesRoundTrip) {
    for (auto k : {TargetKind::none, TargetKind::raw64, TargetKind::half, TargetKind::sq, TargetKind::vq})
        EXPECT_EQ(parse_target_kind(to_string(k)), k);
    EXPECT_THROW(parse_target_kind("nf"), parameter_error);
}

TEST(EncodeTarget, IdentityAndNoneAreExact) {
    const Matrix w = gaussian_matrix(12, 20, 3);
    EXPECT_EQ(decode_target(encode_target(w, QuantizerConfig::identity())), w);
    EXPECT_EQ(decode_target(encode_target(w, {.kind = TargetKind::none})), Matrix(12, 20));
}

TEST(EncodeTarget, HalfRoundsEachValue) {
    const Matrix w = gaussian_matrix(4, 6, 1);
    const Matrix y = decode_target(encode_target(w, {.kind = TargetKind::half}));
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(y.values()[i], round_to_half(w.values()[i]));
    EXPECT_THROW(encode_target(Matrix(1, 1, 1e6), {.kind = TargetKind::half}), parameter_error);
}

TEST(EncodeTarget, SqMatchesDirectNfQuantization) {
    const Matrix w = gaussian_matrix(16, 32, 4);
    const auto enc = encode_target(w, {.kind = TargetKind::sq, .bits = 3, .block_size = 32});
    const auto direct = sq_dequantize(sq_quantize(w.values(), 3, 32));
    EXPECT_EQ(decode_target(enc).data(), direct);
}

TEST(EncodeTarget, PermutedRoundTripUndoesPermutation) {
    const Matrix w = gaussian_matrix(40, 16, 5);
    QuantizerConfig cfg{.kind = TargetKind::vq, .bits = 2, .dim = 2, .block_size = 16, .permute = true,
                        .permutation_rows = 16};
    const auto enc = encode_target(w, cfg);
    EXPECT_EQ(enc.permutations.size(), 3u);
    const Matrix y = decode_target(enc);
    // undoing the permutation must land each value near its original column
    cfg.permute = false;
    const double plain = frobenius_error(decode_target(encode_target(w, cfg)), w);
    EXPECT_LT(frobenius_error(y, w), 2.0 * plain);
}

TEST(EncodeTarget, VqIsDeterministic) {
    const Matrix w = gaussian_matrix(32, 32, 6);
    const QuantizerConfig cfg{.kind = TargetKind::vq, .bits = 2, .dim = 2, .seed = 9};
    EXPECT_EQ(encode_target(w, cfg), encode_target(w, cfg));
}

TEST(DecodeTarget, InconsistentEncodingIsStructureError) {
    const Matrix w = gaussian_matrix(8, 8, 7);
    auto enc = encode_target(w, {.kind = TargetKind::sq, .bits = 2, .block_size = 8});
    auto bad = enc;
    bad.codes.pop_back();
    EXPECT_THROW(decode_target(bad), structure_error);
    bad = enc;
    bad.scales.reset();
    EXPECT_THROW(decode_target(bad), structure_error);
    bad = enc;
    bad.codes[0] = 4;
    EXPECT_THROW(decode_target(bad), structure_error);
    auto raw = encode_target(w, QuantizerConfig::identity());
    raw.raw.pop_back();
    EXPECT_THROW(decode_target(raw), structure_error);
}
