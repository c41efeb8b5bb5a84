#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reallm/budget.hpp"
#include "reallm/container.hpp"
#include "reallm/decoder.hpp"
#include "reallm/errors.hpp"
#include "reallm/lowrank.hpp"
#include "reallm/matrix.hpp"
#include "reallm/patch.hpp"
#include "reallm/quantizer.hpp"

namespace reallm {

// decoder path: the quantized part is patch embeddings plus a shared decoder
struct NeuralConfig {
    std::size_t patch_size = 64;
    std::size_t e0 = 4;
    std::size_t e2 = 8;
    std::size_t hidden = 16;
    unsigned weight_bits = 6;
    TrainOptions train;

    DecoderArch arch() const { return patch_arch(patch_size, e0, e2, hidden); }
};

struct CompressConfig {
    QuantizerConfig quant;  // codes of the matrix, or of the embeddings with a decoder
    DecomposeOptions decompose{.rank = 0};
    bool dora = false;
    std::optional<NeuralConfig> neural;
};

struct CompressResult {
    QuantizedMatrix qm;
    double objective = 0.0;  // decomposition objective ‖w − (Q + L1·L2ᵗ)‖_F
    double error = 0.0;      // ‖w − dequantize(qm)‖_F, differs from objective only with DoRA
    std::vector<double> objective_history;
    BitBudgetReport budget;
};

struct Core {
    TargetEncoding target;
    std::optional<StoredDecoder> decoder;
};

inline std::pair<Core, Matrix> quantize_core(const Matrix& m, const CompressConfig& cfg) {
    QuantizedMatrix qm{m.rows(), m.cols(), {}, {}, {}, {}};
    if (cfg.neural) {
        const auto& nc = *cfg.neural;
        const auto grid = patchify(m, nc.patch_size);
        std::vector<Matrix> patches;
        for (const auto& p : grid.patches) patches.push_back(*p);
        TrainOptions opt = nc.train;
        opt.half_latents = cfg.quant.kind == TargetKind::half;
        const auto trained = qat_train(patches, nc.arch(), nc.weight_bits, opt);
        qm.decoder = store_decoder(trained.decoder, nc.patch_size);
        qm.target = encode_target(latent_matrix(trained.embeddings), cfg.quant);
    } else {
        qm.target = encode_target(m, cfg.quant);
    }
    Matrix v = dequantize_core(qm);
    return {Core{std::move(qm.target), std::move(qm.decoder)}, std::move(v)};
}

//
// Residual decomposition, quantization of the core (codes or decoder +
// embeddings) and optional DoRA magnitudes, in that order.
//
inline CompressResult compress(const Matrix& w, const CompressConfig& cfg) {
    if (w.empty() || !w.all_finite()) throw parameter_error("compress: matrix must be non-empty and finite");
    auto d = residual_decompose<Core>(w, [&](const Matrix& m) { return quantize_core(m, cfg); }, cfg.decompose);

    CompressResult r;
    r.qm.rows = w.rows();
    r.qm.cols = w.cols();
    r.qm.target = std::move(d.core.target);
    r.qm.decoder = std::move(d.core.decoder);
    if (cfg.decompose.rank > 0) r.qm.lowrank = std::move(d.lowrank);
    if (cfg.dora) {
        const LowRankPair lr = r.qm.lowrank ? r.qm.lowrank->pair() : LowRankPair::zero(w.rows(), w.cols());
        r.qm.dora = store_magnitudes(dora_init(d.core_value, lr).magnitude);
    }
    r.objective = d.objective.back();
    r.objective_history = d.objective;
    r.error = frobenius_error(w, dequantize(r.qm));
    r.budget = budget_of(r.qm);
    return r;
}

// ---- SQ / VQ × permutation ablation -------------------------------------------------

struct AblationConfig {
    unsigned bits = 3;
    unsigned dim = 2;
    std::size_t block_size = 64;  // for the permuted cells
    std::size_t group_size = 256;
    std::size_t permutation_rows = default_permutation_rows;
    std::uint64_t seed = 0;
    KMeansOptions kmeans;
    double budget_tolerance = 0.01;
};

struct AblationCell {
    std::string name;
    QuantizerConfig config;
    double error = 0.0;
    Rational bits_per_coordinate;
};

struct AblationTable {
    std::vector<AblationCell> cells;  // sq, sq+perm, vq, vq+perm

    const AblationCell& cell(const std::string& name) const {
        for (const auto& c : cells)
            if (c.name == name) return c;
        throw parameter_error("ablation: no cell '" + name + "'");
    }
};

inline Rational cell_budget(std::size_t p, std::size_t q, const QuantizerConfig& c) {
    BudgetSpec s{.p = p, .q = q, .kind = c.kind, .bits = c.bits, .dim = c.dim, .block_size = c.block_size,
                 .group_size = c.group_size, .permute = c.permute, .permutation_rows = c.permutation_rows};
    return budget_reallm(s).bits_per_coordinate();
}

//
// Budgets are matched to the vq+perm cell at the configured block size; every
// other cell spends its missing bits (permutation, codebook) on finer scale
// blocks, taking the block size whose budget lands closest.
//
inline std::size_t matched_block_size(std::size_t p, std::size_t q, QuantizerConfig c, const Rational& target) {
    const std::size_t largest = c.block_size;
    std::size_t best = largest;
    Rational best_gap(-1);
    for (std::size_t b = 1; b <= largest; ++b) {
        c.block_size = b;
        Rational gap = cell_budget(p, q, c) - target;
        if (gap < Rational(0)) gap = Rational(0) - gap;
        if (best_gap < Rational(0) || gap < best_gap) {
            best_gap = gap;
            best = b;
        }
    }
    return best;
}

inline std::vector<QuantizerConfig> ablation_configs(std::size_t p, std::size_t q, const AblationConfig& a) {
    std::vector<QuantizerConfig> out;
    for (auto kind : {TargetKind::sq, TargetKind::vq})
        for (bool permute : {false, true})
            out.push_back({.kind = kind, .bits = a.bits, .dim = kind == TargetKind::vq ? a.dim : 1u,
                           .block_size = a.block_size, .group_size = a.group_size, .permute = permute,
                           .permutation_rows = a.permutation_rows, .seed = a.seed, .kmeans = a.kmeans});
    const Rational target = cell_budget(p, q, out.back());
    for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i].block_size = matched_block_size(p, q, out[i], target);
    return out;
}

inline AblationTable run_ablation(const Matrix& w, const AblationConfig& a) {
    const auto cfgs = ablation_configs(w.rows(), w.cols(), a);
    const char* names[] = {"sq", "sq+perm", "vq", "vq+perm"};
    AblationTable t;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const Matrix y = decode_target(encode_target(w, cfgs[i]));
        t.cells.push_back({names[i], cfgs[i], frobenius_error(w, y), cell_budget(w.rows(), w.cols(), cfgs[i])});
    }
    Rational lo = t.cells[0].bits_per_coordinate, hi = lo;
    for (const auto& c : t.cells) {
        lo = std::min(lo, c.bits_per_coordinate);
        hi = std::max(hi, c.bits_per_coordinate);
    }
    if ((hi - lo).to_double() > a.budget_tolerance * lo.to_double())
        throw configuration_error("ablation: cell budgets differ by more than " +
                                  std::to_string(100 * a.budget_tolerance) + "%");
    return t;
}

}  // namespace reallm
