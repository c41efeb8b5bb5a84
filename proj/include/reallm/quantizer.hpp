#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/half.hpp"
#include "reallm/matrix.hpp"
#include "reallm/nf_quant.hpp"
#include "reallm/permute.hpp"
#include "reallm/vq.hpp"

namespace reallm {

//
// How the quantized part Q of a matrix (or of a latent tensor laid out as a
// matrix) is stored.
//   none  : absent, Q = 0
//   raw64 : identity quantizer, float64 values
//   half  : binary16 values
//   sq    : NF scalar codes + scale tree
//   vq    : Kmeans codebook codes + scale tree
//
enum class TargetKind : std::uint8_t { none = 0, raw64 = 1, half = 2, sq = 3, vq = 4 };

inline const char* to_string(TargetKind k) {
    switch (k) {
        case TargetKind::none: return "none";
        case TargetKind::raw64: return "raw64";
        case TargetKind::half: return "half";
        case TargetKind::sq: return "sq";
        case TargetKind::vq: return "vq";
    }
    return "?";
}

inline TargetKind parse_target_kind(const std::string& s) {
    for (auto k : {TargetKind::none, TargetKind::raw64, TargetKind::half, TargetKind::sq, TargetKind::vq})
        if (s == to_string(k)) return k;
    throw parameter_error("unknown quantizer kind '" + s + "'");
}

struct QuantizerConfig {
    TargetKind kind = TargetKind::vq;
    unsigned bits = 3;  // per coordinate
    unsigned dim = 2;   // vq bucket dimension
    std::size_t block_size = 64;
    std::size_t group_size = 256;
    bool permute = false;
    std::size_t permutation_rows = default_permutation_rows;
    std::uint64_t seed = 0;
    KMeansOptions kmeans;

    static QuantizerConfig identity() { return {.kind = TargetKind::raw64}; }
};

struct TargetEncoding {
    TargetKind kind = TargetKind::none;
    std::size_t rows = 0;
    std::size_t cols = 0;
    unsigned bits = 0;
    unsigned dim = 1;
    std::vector<double> raw;            // raw64 / half
    std::vector<std::uint32_t> codes;   // sq / vq
    std::optional<ScaleTree> scales;    // sq / vq
    std::optional<Codebook> codebook;   // vq
    std::size_t permutation_rows = default_permutation_rows;
    std::vector<ColumnPermutation> permutations;  // one per strip, empty when not permuted

    bool permuted() const noexcept { return !permutations.empty(); }

    unsigned code_bits() const noexcept {
        switch (kind) {
            case TargetKind::sq: return bits;
            case TargetKind::vq: return bits * dim;
            case TargetKind::half: return 16;
            case TargetKind::raw64: return 64;
            default: return 0;
        }
    }

    friend bool operator==(const TargetEncoding&, const TargetEncoding&) = default;
};

// permute → normalize → fit codebook → encode
inline TargetEncoding encode_target(const Matrix& t, const QuantizerConfig& cfg) {
    TargetEncoding enc;
    enc.kind = cfg.kind;
    enc.rows = t.rows();
    enc.cols = t.cols();
    enc.permutation_rows = cfg.permutation_rows;

    switch (cfg.kind) {
        case TargetKind::none:
            return enc;
        case TargetKind::raw64:
            enc.raw = t.data();
            return enc;
        case TargetKind::half:
            enc.raw.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (std::abs(t.values()[i]) > half_max)
                    throw parameter_error("half storage: value exceeds the binary16 range");
                enc.raw[i] = round_to_half(t.values()[i]);
            }
            return enc;
        case TargetKind::sq:
        case TargetKind::vq:
            break;
    }

    enc.bits = cfg.bits;
    enc.dim = cfg.kind == TargetKind::vq ? cfg.dim : 1;
    const Matrix* src = &t;
    PermutedStrips ps;
    if (cfg.permute) {
        ps = permute_strips(t, cfg.permutation_rows);
        enc.permutations = std::move(ps.perms);
        src = &ps.matrix;
    }

    auto norm = normalize_blocks(src->values(), cfg.block_size, cfg.group_size);
    enc.scales = std::move(norm.tree);
    if (cfg.kind == TargetKind::sq) {
        const auto nf = nf_levels(cfg.bits);
        enc.codes.resize(norm.values.size());
        for (std::size_t i = 0; i < norm.values.size(); ++i) enc.codes[i] = nearest_level(nf, norm.values[i]);
    } else {
        enc.codebook = build_codebook(norm.values, cfg.bits, cfg.dim, cfg.seed, cfg.kmeans);
        enc.codes = vq_encode(norm.values, *enc.codebook).codes;
    }
    return enc;
}

inline Matrix decode_target(const TargetEncoding& enc) {
    const std::size_t n = enc.rows * enc.cols;
    switch (enc.kind) {
        case TargetKind::none:
            return Matrix(enc.rows, enc.cols);
        case TargetKind::raw64:
        case TargetKind::half:
            if (enc.raw.size() != n) throw structure_error("target: raw value count does not match shape");
            return Matrix(enc.rows, enc.cols, enc.raw);
        case TargetKind::sq:
        case TargetKind::vq:
            break;
        default:
            throw structure_error("target: unknown storage kind");
    }
    if (!enc.scales) throw structure_error("target: quantized codes without a scale tree");
    if (enc.scales->element_count != n) throw structure_error("target: scale tree does not cover the shape");

    std::vector<double> normalized;
    if (enc.kind == TargetKind::sq) {
        const auto nf = nf_levels(enc.bits);
        if (enc.codes.size() != n) throw structure_error("target: code count does not match shape");
        normalized.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (enc.codes[i] >= nf.size()) throw structure_error("target: NF code out of range");
            normalized[i] = nf.levels[enc.codes[i]];
        }
    } else {
        if (!enc.codebook) throw structure_error("target: vq codes without a codebook");
        if (enc.codes.size() * enc.codebook->dim != n)
            throw structure_error("target: code count does not match shape");
        normalized = vq_decode(CodeStream{enc.code_bits(), enc.codes}, *enc.codebook);
    }
    Matrix out(enc.rows, enc.cols, denormalize(normalized, *enc.scales));
    if (enc.permuted()) out = inverse_strips(out, enc.permutations, enc.permutation_rows);
    return out;
}

}  // namespace reallm
