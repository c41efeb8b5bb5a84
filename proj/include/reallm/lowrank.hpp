#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/half.hpp"
#include "reallm/matrix.hpp"
#include "reallm/quantizer.hpp"
#include "reallm/svd.hpp"

namespace reallm {

// R = L1·L2ᵗ with L1: p×r, L2: q×r. rank 0 means absent.
struct LowRankPair {
    Matrix l1;
    Matrix l2;

    std::size_t rank() const noexcept { return l1.cols(); }
    Matrix product() const { return matmul_nt(l1, l2); }

    static LowRankPair zero(std::size_t p, std::size_t q) { return {Matrix(p, 0), Matrix(q, 0)}; }

    friend bool operator==(const LowRankPair&, const LowRankPair&) = default;
};

//
// A low-rank factor as stored in a container:
//   bits 8  : int8 codes in [-127, 127], one binary16 absmax scale per column
//   bits 16 : binary16 per entry
//   bits 64 : float64 per entry
// `value` always holds the reconstruction.
//
struct StoredFactor {
    unsigned bits = 8;
    Matrix value;
    std::vector<std::int8_t> codes;     // bits 8, row-major
    std::vector<std::uint16_t> scales;  // bits 8, per column

    std::uint64_t storage_bits() const noexcept {
        const std::uint64_t n = value.size();
        return bits == 8 ? 8 * n + 16 * value.cols() : n * bits;
    }

    friend bool operator==(const StoredFactor&, const StoredFactor&) = default;
};

inline void check_factor_bits(unsigned bits) {
    if (bits != 8 && bits != 16 && bits != 64)
        throw parameter_error("low-rank storage must be 8, 16 or 64 bits, got " + std::to_string(bits));
}

inline Matrix factor_from_codes(std::size_t rows, std::size_t cols, const std::vector<std::int8_t>& codes,
                                const std::vector<std::uint16_t>& scales) {
    if (codes.size() != rows * cols || scales.size() != cols)
        throw structure_error("low-rank factor: code or scale count does not match shape");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = codes[i * cols + j] * half_value(scales[j]);
    return m;
}

inline StoredFactor store_factor(const Matrix& f, unsigned bits) {
    check_factor_bits(bits);
    StoredFactor s{.bits = bits};
    if (bits == 64) {
        s.value = f;
    } else if (bits == 16) {
        s.value = Matrix(f.rows(), f.cols());
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (std::abs(f.values()[i]) > half_max) throw parameter_error("low-rank factor exceeds the binary16 range");
            s.value.values()[i] = round_to_half(f.values()[i]);
        }
    } else {
        const auto amax = [&] {
            std::vector<double> a(f.cols(), 0.0);
            for (std::size_t i = 0; i < f.rows(); ++i)
                for (std::size_t j = 0; j < f.cols(); ++j) a[j] = std::max(a[j], std::abs(f(i, j)));
            return a;
        }();
        s.scales.resize(f.cols());
        for (std::size_t j = 0; j < f.cols(); ++j) {
            if (amax[j] / 127.0 > half_max) throw parameter_error("low-rank factor exceeds the binary16 range");
            s.scales[j] = half_bits_ceil(amax[j] / 127.0);
        }
        s.codes.resize(f.size());
        for (std::size_t i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < f.cols(); ++j) {
                const double sc = half_value(s.scales[j]);
                const double c = sc > 0.0 ? std::nearbyint(f(i, j) / sc) : 0.0;
                s.codes[i * f.cols() + j] = static_cast<std::int8_t>(std::clamp(c, -127.0, 127.0));
            }
        s.value = factor_from_codes(f.rows(), f.cols(), s.codes, s.scales);
    }
    return s;
}

struct StoredLowRank {
    StoredFactor l1;
    StoredFactor l2;

    std::size_t rank() const noexcept { return l1.value.cols(); }
    std::uint64_t storage_bits() const noexcept { return l1.storage_bits() + l2.storage_bits(); }
    Matrix product() const { return matmul_nt(l1.value, l2.value); }
    LowRankPair pair() const { return {l1.value, l2.value}; }

    friend bool operator==(const StoredLowRank&, const StoredLowRank&) = default;
};

inline StoredLowRank store_lowrank(const LowRankPair& lr, unsigned bits) {
    if (lr.l1.cols() != lr.l2.cols()) throw dimension_error("low-rank pair: factor ranks differ");
    return {store_factor(lr.l1, bits), store_factor(lr.l2, bits)};
}

enum class DecomposeOrder : std::uint8_t { residual_first, svd_first };

struct DecomposeOptions {
    std::size_t rank = 64;
    std::size_t iters = 3;
    DecomposeOrder order = DecomposeOrder::residual_first;
    unsigned lowrank_bits = 8;
    SvdOptions svd;
};

struct HalfStep {
    enum Kind : std::uint8_t { lowrank, quantize } kind;
    double objective;  // after the step, whether accepted or not
    bool accepted;
};

template <class Core>
struct Decomposition {
    Core core;
    Matrix core_value;  // dequantized core
    std::optional<StoredLowRank> lowrank;
    double baseline = 0.0;           // ‖w − dequant(quantize(w))‖, the r = 0 objective (residual_first only)
    std::vector<double> objective;   // after each iteration
    std::vector<HalfStep> steps;

    Matrix reconstruction() const { return lowrank ? core_value + lowrank->product() : core_value; }
};

//
// Alternating minimization of ‖w − (Q + L1·L2ᵗ)‖_F. `quantize(m)` returns a
// (core, dequantized core) pair. Each iteration refits the low-rank part to
// w − Q by truncated SVD, then requantizes w − L1·L2ᵗ. The objective is measured
// with the stored (rounded) factors, and a half-step that would raise it is
// rejected so the recorded sequence never increases.
//
template <class Core, class Quantize>
Decomposition<Core> residual_decompose(const Matrix& w, Quantize&& quantize, const DecomposeOptions& opt) {
    const std::size_t p = w.rows(), q = w.cols();
    if (opt.rank > std::min(p, q))
        throw parameter_error("residual_decompose: rank " + std::to_string(opt.rank) + " exceeds min(p, q)");
    if (opt.iters < 1) throw parameter_error("residual_decompose: iters must be at least 1");
    check_factor_bits(opt.lowrank_bits);

    Decomposition<Core> d;
    bool have_core = false;
    Matrix lr_value(p, q);
    double current = frobenius_norm(w);

    if (opt.order == DecomposeOrder::residual_first || opt.rank == 0) {
        std::tie(d.core, d.core_value) = quantize(w);
        have_core = true;
        current = frobenius_error(w, d.core_value);
        d.baseline = current;
    } else {
        d.core_value = Matrix(p, q);
    }
    if (opt.rank == 0) {
        d.objective.push_back(current);
        return d;
    }

    for (std::size_t it = 0; it < opt.iters; ++it) {
        {
            const auto svd = truncated_svd(w - d.core_value, opt.rank, opt.svd);
            auto cand = store_lowrank({svd.l1, svd.l2}, opt.lowrank_bits);
            Matrix cand_value = cand.product();
            const double obj = frobenius_error(w, d.core_value + cand_value);
            const bool ok = obj <= current;
            d.steps.push_back({HalfStep::lowrank, obj, ok});
            if (ok) {
                d.lowrank = std::move(cand);
                lr_value = std::move(cand_value);
                current = obj;
            }
        }
        {
            auto [core, value] = quantize(w - lr_value);
            const double obj = frobenius_error(w, value + lr_value);
            const bool ok = !have_core || obj <= current;
            d.steps.push_back({HalfStep::quantize, obj, ok});
            if (ok) {
                d.core = std::move(core);
                d.core_value = std::move(value);
                have_core = true;
                current = obj;
            }
        }
        d.objective.push_back(current);
    }
    if (!d.lowrank) d.lowrank = store_lowrank(LowRankPair::zero(p, q), opt.lowrank_bits);
    return d;
}

inline Decomposition<TargetEncoding> residual_decompose(const Matrix& w, const QuantizerConfig& cfg,
                                                        const DecomposeOptions& opt) {
    return residual_decompose<TargetEncoding>(
        w,
        [&](const Matrix& m) {
            auto enc = encode_target(m, cfg);
            Matrix v = decode_target(enc);
            return std::pair{std::move(enc), std::move(v)};
        },
        opt);
}

// ---- DoRA -------------------------------------------------------------------

constexpr double column_norm_epsilon = 1e-12;

struct DoraState {
    std::vector<double> magnitude;  // one per column
    LowRankPair lowrank;

    friend bool operator==(const DoraState&, const DoraState&) = default;
};

inline Matrix dora_base(const Matrix& wq, const LowRankPair& lr) {
    if (lr.rank() == 0) return wq;
    if (lr.l1.rows() != wq.rows() || lr.l2.rows() != wq.cols())
        throw dimension_error("dora: low-rank factors do not match the matrix shape");
    return wq + lr.product();
}

// column-normalized w_q + L1·L2ᵗ; zero columns stay zero
inline Matrix dora_direction(const Matrix& wq, const LowRankPair& lr) {
    Matrix v = dora_base(wq, lr);
    const auto n = column_norms(v);
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) /= std::max(n[j], column_norm_epsilon);
    return v;
}

inline Matrix dora_forward(const Matrix& wq, const DoraState& s) {
    Matrix v = dora_base(wq, s.lowrank);
    if (s.magnitude.size() != v.cols()) throw dimension_error("dora: magnitude length does not match columns");
    const auto n = column_norms(v);
    std::vector<double> f(v.cols());
    for (std::size_t j = 0; j < v.cols(); ++j) f[j] = s.magnitude[j] / std::max(n[j], column_norm_epsilon);
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) *= f[j];
    return v;
}

inline DoraState dora_init(const Matrix& wq, const LowRankPair& lr) {
    DoraState s{column_norms(dora_base(wq, lr)), lr};
    for (double& m : s.magnitude) m = std::max(m, column_norm_epsilon);
    return s;
}

// binary16 magnitudes as stored; never rounded to zero
inline std::vector<std::uint16_t> store_magnitudes(const std::vector<double>& m) {
    std::vector<std::uint16_t> out(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
        if (!(m[j] > 0.0)) throw parameter_error("dora: magnitudes must be positive");
        if (m[j] > half_max) throw parameter_error("dora: magnitude exceeds the binary16 range");
        out[j] = std::max(half_bits(m[j]), half_min_positive);
    }
    return out;
}

inline std::vector<double> magnitude_values(const std::vector<std::uint16_t>& m) {
    std::vector<double> out(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) out[j] = half_value(m[j]);
    return out;
}

}  // namespace reallm
