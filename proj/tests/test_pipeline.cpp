#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "reallm/compress.hpp"
#include "reallm/finetune.hpp"
#include "reallm/generators.hpp"

using namespace reallm;

namespace {

// central differences of the chain loss for every trainable scalar
double toy_max_gradient_gap(std::vector<ToyState> states, const Matrix& x, const Matrix& ref) {
    const auto g = chain_gradients(states, x, ref);
    const double h = 1e-6;
    double worst = 0.0;
    auto probe = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + h;
        const double up = chain_gradients(states, x, ref).loss;
        slot = keep - h;
        const double down = chain_gradients(states, x, ref).loss;
        slot = keep;
        worst = std::max(worst, relative_gap(analytic, (up - down) / (2 * h)));
    };
    for (std::size_t k = 0; k < states.size(); ++k) {
        auto& s = states[k];
        for (std::size_t i = 0; i < s.dora.lowrank.l1.size(); ++i)
            probe(s.dora.lowrank.l1.values()[i], g.blocks[k].l1.values()[i]);
        for (std::size_t i = 0; i < s.dora.lowrank.l2.size(); ++i)
            probe(s.dora.lowrank.l2.values()[i], g.blocks[k].l2.values()[i]);
        for (std::size_t i = 0; i < s.dora.magnitude.size(); ++i) probe(s.dora.magnitude[i], g.blocks[k].magnitude[i]);
    }
    return worst;
}

CompressConfig nf3_rank(std::size_t r) {
    CompressConfig c;
    c.quant = {.kind = TargetKind::sq, .bits = 3, .block_size = 16};
    c.decompose = {.rank = r, .iters = 2};
    return c;
}

}  // namespace

TEST(Generators, SeededAndDeterministic) {
    EXPECT_EQ(planted_columns(16, 20, 3, 0.1, 4), planted_columns(16, 20, 3, 0.1, 4));
    EXPECT_NE(planted_columns(16, 20, 3, 0.1, 4), planted_columns(16, 20, 3, 0.1, 5));
    EXPECT_EQ(sparse_outliers(8, 8, 5, 50.0, 1), sparse_outliers(8, 8, 5, 50.0, 1));
}

TEST(Generators, PlantedStructureIsMoreCorrelatedThanIid) {
    for (std::uint64_t s = 0; s < 5; ++s)
        EXPECT_GT(column_correlation(planted_columns(128, 128, 8, 0.1, s)),
                  column_correlation(gaussian_matrix(128, 128, s)) + 0.3);
}

TEST(Generators, OutlierCountIsExact) {
    for (std::size_t count : {0u, 1u, 17u, 64u}) EXPECT_EQ(count_outliers(sparse_outliers(8, 8, count, 100.0, 3), 100.0), count);
    EXPECT_THROW(sparse_outliers(2, 2, 5, 1.0, 0), parameter_error);
}

TEST(Compress, HalfStorageIsLosslessUpToRounding) {
    const Matrix w = gaussian_matrix(24, 16, 2);
    CompressConfig c;
    c.quant = {.kind = TargetKind::half};
    const auto r = compress(w, c);
    EXPECT_LT(r.error, 1e-3 * frobenius_norm(w));
    EXPECT_EQ(r.budget.bits_per_coordinate(), Rational(16));
}

TEST(Compress, DequantizeErrorEqualsRecordedObjective) {
    const Matrix w = gaussian_matrix(48, 32, 3);
    for (std::size_t r : {0u, 4u}) {
        const auto res = compress(w, nf3_rank(r));
        const Matrix y = dequantize(deserialize(serialize(res.qm)));
        EXPECT_NEAR(frobenius_error(w, y), res.objective, 1e-9);
        EXPECT_EQ(res.error, res.objective);
    }
}

TEST(Compress, GaussianVqMatchesScriptedOracle) {
    // tests/oracles/vq_pipeline.py: mean relative error 0.165801 (scipy kmeans2, float block scales)
    const Matrix w = gaussian_matrix(512, 512, 11);
    CompressConfig c;
    c.quant = {.kind = TargetKind::vq, .bits = 3, .dim = 2, .block_size = 64, .seed = 1};
    const auto r = compress(w, c);
    EXPECT_NEAR(r.error / frobenius_norm(w), 0.165801, 0.05 * 0.165801);
}

TEST(Compress, DoraMagnitudesStoredAndApplied) {
    const Matrix w = gaussian_matrix(32, 24, 5);
    auto c = nf3_rank(2);
    c.dora = true;
    const auto r = compress(w, c);
    ASSERT_EQ(r.qm.dora.size(), 24u);
    EXPECT_EQ(r.budget.component("dora_magnitude"), 16u * 24);
    // half-precision magnitudes perturb the column norms only slightly
    EXPECT_NEAR(r.error, r.objective, 2e-3 * frobenius_norm(w));
}

TEST(Compress, DecoderPathRoundTrips) {
    const Matrix w = gaussian_matrix(16, 32, 6);
    CompressConfig c;
    c.quant = {.kind = TargetKind::half};
    c.neural = NeuralConfig{.patch_size = 16, .e0 = 2, .e2 = 4, .hidden = 6, .weight_bits = 6};
    c.neural->train.epochs = 20;
    c.neural->train.peak_lr = 1e-2;
    const auto r = compress(w, c);
    ASSERT_TRUE(r.qm.decoder);
    EXPECT_EQ(r.qm.target.rows, 2u * 2);
    EXPECT_EQ(r.budget.component("decoder"), r.qm.decoder->arch.parameter_count() * 6);
    EXPECT_EQ(r.budget.component("embedding"), 2u * 2 * 2 * 4 * 16);
    const auto back = deserialize(serialize(r.qm));
    EXPECT_EQ(back, r.qm);
    EXPECT_EQ(frobenius_error(w, dequantize(back)), r.error);
}

TEST(Ablation, DeterministicWithMatchedBudgets) {
    const Matrix w = planted_columns(128, 128, 4, 0.1, 9);
    AblationConfig a{.permutation_rows = 64};
    const auto t1 = run_ablation(w, a);
    const auto t2 = run_ablation(w, a);
    ASSERT_EQ(t1.cells.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(t1.cells[i].error, t2.cells[i].error);
        EXPECT_NEAR(t1.cells[i].bits_per_coordinate.to_double(), t1.cells[1].bits_per_coordinate.to_double(),
                    0.01 * t1.cells[1].bits_per_coordinate.to_double());
    }
    EXPECT_LT(t1.cells[0].config.block_size, t1.cells[1].config.block_size);
}

TEST(Ablation, ImpossibleMatchIsConfigurationError) {
    // a single-column strip cannot be matched by any finer block size
    AblationConfig a{.block_size = 1, .permutation_rows = 1};
    EXPECT_THROW(run_ablation(gaussian_matrix(8, 64, 1), a), configuration_error);
}

TEST(ToyFinetune, GradientsMatchFiniteDifferences) {
    Rng rng = make_rng(12);
    for (int cfg = 0; cfg < 3; ++cfg) {
        const std::size_t p = 6 + cfg, r = 1 + cfg, chain = 1 + cfg % 2;
        std::vector<ToyState> states;
        for (std::size_t k = 0; k < chain; ++k) {
            const Matrix wq = gaussian_matrix(p, p, rng);
            DoraState d{std::vector<double>(p), {gaussian_matrix(p, r, rng, 0.3), gaussian_matrix(p, r, rng, 0.3)}};
            for (double& m : d.magnitude) m = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
            states.push_back({wq, d});
        }
        const Matrix x = gaussian_matrix(10, p, rng);
        const Matrix ref = gaussian_matrix(10, p, rng);
        EXPECT_LT(toy_max_gradient_gap(states, x, ref), 1e-4) << "config " << cfg;
    }
}

TEST(ToyFinetune, ZeroStepsReportInitialQuantizationError) {
    const Matrix w = gaussian_matrix(16, 16, 7);
    const auto block = make_toy_block(w, 32, 1);
    const auto r = compress(w, nf3_rank(2));
    const auto f = toy_finetune(std::span(&block, 1), std::span(&r.qm, 1), {.block_steps = 0});
    ASSERT_EQ(f.block_losses[0].size(), 1u);
    EXPECT_NEAR(f.block_losses[0][0], output_loss(matmul_nt(block.x, dequantize(r.qm)), block.y_ref), 1e-12);
}

TEST(ToyFinetune, DescentKeepsFrozenPartsAndLowersLoss) {
    std::vector<ToyBlock> blocks;
    std::vector<QuantizedMatrix> qms;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Matrix w = gaussian_matrix(16, 16, 20 + s, 0.25);
        blocks.push_back(make_toy_block(w, 64, s));
        qms.push_back(compress(w, nf3_rank(2)).qm);
    }
    std::vector<std::uint32_t> before;
    for (const auto& q : qms) before.push_back(frozen_hash(q));
    const auto f = toy_finetune(blocks, qms, {.block_steps = 40, .e2e_steps = 20});
    for (std::size_t j = 0; j < qms.size(); ++j) {
        EXPECT_EQ(frozen_hash(qms[j]), before[j]);
        EXPECT_LE(f.block_losses[j].back(), f.block_losses[j].front());
        EXPECT_EQ(frozen_hash(with_finetuned(qms[j], f.states[j], 8)), before[j]);
    }
    EXPECT_LE(f.e2e_losses.back(), f.e2e_losses.front());
}

TEST(ToyFinetune, DivergenceRaisesTrainingError) {
    const Matrix w = gaussian_matrix(8, 8, 3);
    const auto block = make_toy_block(w, 16, 1);
    const auto r = compress(w, nf3_rank(1));
    EXPECT_THROW(toy_finetune(std::span(&block, 1), std::span(&r.qm, 1), {.block_steps = 200, .lr = 1e6}),
                 training_error);
}
