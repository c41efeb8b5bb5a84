#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "reallm/container.hpp"
#include "reallm/errors.hpp"
#include "reallm/lowrank.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

//
// Toy stand-in for a transformer block: one linear layer y = x·wᵗ with a
// seeded Gaussian calibration input. Reference outputs use the uncompressed
// weight and are fixed before quantization.
//
struct ToyBlock {
    Matrix w;      // p × q
    Matrix x;      // n × q
    Matrix y_ref;  // n × p
};

inline ToyBlock make_toy_block(const Matrix& w, std::size_t n, std::uint64_t seed) {
    ToyBlock b{w, gaussian_matrix(n, w.cols(), seed), {}};
    b.y_ref = matmul_nt(b.x, w);
    return b;
}

// trainable side of a compressed matrix; wq never changes
struct ToyState {
    Matrix wq;
    DoraState dora;

    Matrix weight() const { return dora_forward(wq, dora); }
};

inline ToyState toy_state(const QuantizedMatrix& qm) {
    const Matrix wq = dequantize_core(qm);
    const LowRankPair lr = qm.lowrank ? qm.lowrank->pair() : LowRankPair::zero(qm.rows, qm.cols);
    return {wq, dora_init(wq, lr)};
}

// mean squared output error
inline double output_loss(const Matrix& out, const Matrix& ref) {
    const double e = frobenius_error(out, ref);
    return e * e / static_cast<double>(ref.size());
}

struct DoraGradients {
    Matrix l1, l2;
    std::vector<double> magnitude;
};

// gradients of a loss with dL/dW = g through W = m ⊙ (wq + L1·L2ᵗ)/‖·‖_c
inline DoraGradients dora_backward(const ToyState& s, const Matrix& g) {
    const Matrix v = dora_base(s.wq, s.dora.lowrank);
    require_same_shape(v, g, "dora_backward");
    const auto n = column_norms(v);
    const std::size_t p = v.rows(), q = v.cols();
    std::vector<double> gv(q, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) gv[j] += g(i, j) * v(i, j);

    DoraGradients d;
    d.magnitude.resize(q);
    Matrix dv(p, q);
    for (std::size_t j = 0; j < q; ++j) {
        const double nj = std::max(n[j], column_norm_epsilon);
        d.magnitude[j] = gv[j] / nj;
        const double sj = s.dora.magnitude[j] / nj;
        for (std::size_t i = 0; i < p; ++i) dv(i, j) = sj * (g(i, j) - v(i, j) * gv[j] / (nj * nj));
    }
    if (s.dora.lowrank.rank() > 0) {
        d.l1 = matmul(dv, s.dora.lowrank.l2);
        d.l2 = matmul_tn(dv, s.dora.lowrank.l1);
    } else {
        d.l1 = Matrix(p, 0);
        d.l2 = Matrix(q, 0);
    }
    return d;
}

struct ChainGradients {
    double loss = 0.0;
    std::vector<DoraGradients> blocks;
};

// loss and gradients of a chain x → x·W1ᵗ → ... against a final reference
inline ChainGradients chain_gradients(std::span<const ToyState> states, const Matrix& x, const Matrix& ref) {
    std::vector<Matrix> w, inputs{x};
    for (const auto& s : states) {
        w.push_back(s.weight());
        inputs.push_back(matmul_nt(inputs.back(), w.back()));
    }
    const Matrix& out = inputs.back();
    require_same_shape(out, ref, "chain output");
    ChainGradients r;
    r.loss = output_loss(out, ref);
    Matrix dout = (2.0 / static_cast<double>(ref.size())) * (out - ref);
    r.blocks.resize(states.size());
    for (std::size_t k = states.size(); k-- > 0;) {
        r.blocks[k] = dora_backward(states[k], matmul_tn(dout, inputs[k]));
        if (k > 0) dout = matmul(dout, w[k]);
    }
    return r;
}

inline void gradient_step(ToyState& s, const DoraGradients& g, double lr) {
    auto axpy = [lr](std::span<double> a, std::span<const double> b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] -= lr * b[i];
    };
    axpy(s.dora.lowrank.l1.values(), g.l1.values());
    axpy(s.dora.lowrank.l2.values(), g.l2.values());
    axpy(s.dora.magnitude, g.magnitude);
}

struct FinetuneOptions {
    std::size_t block_steps = 50;  // K
    std::size_t e2e_steps = 0;     // T
    double lr = 1e-2;
    double e2e_lr = 1e-2;
};

struct FinetuneResult {
    std::vector<ToyState> states;
    std::vector<std::vector<double>> block_losses;  // per block, K + 1 values (before each step, then final)
    std::vector<double> e2e_losses;                 // T + 1 values
};

inline void check_loss(double loss, std::size_t step) {
    if (!std::isfinite(loss)) throw training_error("toy fine-tune: loss is not finite", step);
}

//
// Block-wise then end-to-end gradient descent on DoRA magnitudes and the
// low-rank factors. Block j is trained on its own calibration input; the
// end-to-end phase feeds blocks[0].x through the whole chain against the
// uncompressed chain's output. Quantized cores are never touched.
//
inline FinetuneResult toy_finetune(std::span<const ToyBlock> blocks, std::span<const QuantizedMatrix> compressed,
                                   const FinetuneOptions& opt) {
    if (blocks.size() != compressed.size()) throw parameter_error("toy fine-tune: one compressed matrix per block");
    FinetuneResult r;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        ToyState s = toy_state(compressed[j]);
        std::vector<double> losses;
        const ToyState* one = &s;
        for (std::size_t k = 0; k <= opt.block_steps; ++k) {
            const auto g = chain_gradients(std::span(one, 1), blocks[j].x, blocks[j].y_ref);
            check_loss(g.loss, k);
            losses.push_back(g.loss);
            if (k < opt.block_steps) gradient_step(s, g.blocks[0], opt.lr);
        }
        r.states.push_back(std::move(s));
        r.block_losses.push_back(std::move(losses));
    }
    if (opt.e2e_steps > 0 && !blocks.empty()) {
        Matrix ref = blocks[0].x;
        for (const auto& b : blocks) ref = matmul_nt(ref, b.w);
        for (std::size_t t = 0; t <= opt.e2e_steps; ++t) {
            const auto g = chain_gradients(r.states, blocks[0].x, ref);
            check_loss(g.loss, t);
            r.e2e_losses.push_back(g.loss);
            if (t < opt.e2e_steps)
                for (std::size_t j = 0; j < r.states.size(); ++j) gradient_step(r.states[j], g.blocks[j], opt.e2e_lr);
        }
    }
    return r;
}

// CRC32 over everything fine-tuning must leave alone: codes, codebook,
// scales, permutations, decoder and embeddings
inline std::uint32_t frozen_hash(QuantizedMatrix qm) {
    qm.lowrank.reset();
    qm.dora.clear();
    const auto bytes = serialize(qm);
    return detail::crc32(bytes);
}

// writes trained factors and magnitudes back at the matrix's storage precision
inline QuantizedMatrix with_finetuned(QuantizedMatrix qm, const ToyState& s, unsigned lowrank_bits) {
    if (s.dora.lowrank.rank() > 0 || qm.lowrank) qm.lowrank = store_lowrank(s.dora.lowrank, lowrank_bits);
    qm.dora = store_magnitudes(s.dora.magnitude);
    return qm;
}

}  // namespace reallm
