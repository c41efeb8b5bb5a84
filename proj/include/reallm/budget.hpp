#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "reallm/bitpack.hpp"
#include "reallm/errors.hpp"
#include "reallm/nf_quant.hpp"
#include "reallm/permute.hpp"
#include "reallm/quantizer.hpp"
#include "reallm/rational.hpp"
#include "reallm/vq.hpp"

namespace reallm {

// ---- closed-form formats ------------------------------------------------------

// LoRA: 16-bit weights plus a 16-bit rank-r adapter pair
inline std::uint64_t budget_lora(std::uint64_t p, std::uint64_t q, std::uint64_t r, std::uint64_t m) {
    if (p == 0 || q == 0 || m == 0) throw parameter_error("budget_lora: p, q and m must be positive");
    return 16 * (p * q + 2 * r * std::min(p, q)) * m;
}

// codes at b bits per coordinate plus one 16-bit codebook per matrix
inline std::uint64_t budget_vq_only(std::uint64_t p, std::uint64_t q, unsigned b, unsigned d, std::uint64_t m) {
    if (p == 0 || q == 0 || m == 0 || b == 0 || d == 0)
        throw parameter_error("budget_vq_only: arguments must be positive");
    if (q % d != 0) throw parameter_error("budget_vq_only: d must divide q");
    if (b * d > 32) throw parameter_error("budget_vq_only: b·d too large");
    return (b * p * q + (std::uint64_t{1} << (b * d + 4)) * d) * m;
}

// the ReALLM column as printed: c·b_φ + 32·r·min(p, q) + m·(16·d·2^{bd} + e0·e1·e2·b)
inline std::uint64_t budget_reallm_table(std::uint64_t p, std::uint64_t q, std::uint64_t m, std::uint64_t c,
                                         unsigned b_phi, std::uint64_t r, std::uint64_t e, unsigned b, unsigned d) {
    const std::uint64_t codebook = d == 0 ? 0 : codebook_bits(d, b);
    return c * b_phi + 32 * r * std::min(p, q) + m * (codebook + e * b);
}

// ---- component reports ----------------------------------------------------------

//
// Everything that determines the stored size of one compressed matrix (m
// matrices when they share a decoder). `target` is what the codes describe:
// the matrix itself, or the latent matrix when a decoder is present.
//
struct BudgetSpec {
    std::uint64_t p = 0, q = 0, m = 1;

    TargetKind kind = TargetKind::vq;
    unsigned bits = 3;
    unsigned dim = 2;
    std::uint64_t block_size = 64;
    std::uint64_t group_size = 256;
    bool permute = false;
    std::uint64_t permutation_rows = default_permutation_rows;

    std::uint64_t rank = 0;
    unsigned lowrank_bits = 8;
    bool dora = false;

    // decoder; absent when c == 0
    std::uint64_t c = 0;
    unsigned b_phi = 6;
    std::uint64_t decoder_tensors = 0;  // one binary16 scale each
    std::uint64_t patches = 0;
    std::uint64_t e0 = 0, e1 = 0, e2 = 0;

    bool has_decoder() const noexcept { return c > 0; }
    std::uint64_t target_rows() const noexcept { return has_decoder() ? patches * e0 : p; }
    std::uint64_t target_cols() const noexcept { return has_decoder() ? e1 * e2 : q; }
};

struct BudgetLine {
    std::string name;
    std::uint64_t bits = 0;
    bool extension = false;  // not part of the printed format comparison
};

struct BitBudgetReport {
    std::uint64_t p = 0, q = 0, m = 1;
    std::vector<BudgetLine> components;
    std::uint64_t table_bits = 0;  // the printed ReALLM formula for the same configuration

    std::uint64_t total_bits() const noexcept {
        std::uint64_t t = 0;
        for (const auto& c : components) t += c.bits;
        return t;
    }
    std::uint64_t payload_bytes() const noexcept { return (total_bits() + 7) / 8; }
    Rational per_coordinate(std::uint64_t bits) const {
        return Rational(static_cast<std::int64_t>(bits), static_cast<std::int64_t>(p * q * m));
    }
    Rational bits_per_coordinate() const { return per_coordinate(total_bits()); }

    std::uint64_t component(const std::string& name) const {
        for (const auto& c : components)
            if (c.name == name) return c.bits;
        return 0;
    }
};

inline void validate(const BudgetSpec& s) {
    if (s.p == 0 || s.q == 0 || s.m == 0) throw parameter_error("budget: p, q and m must be positive");
    if (s.has_decoder() && (s.patches == 0 || s.e0 == 0 || s.e1 == 0 || s.e2 == 0))
        throw parameter_error("budget: a decoder needs patches and a latent shape");
    if (s.kind == TargetKind::sq || s.kind == TargetKind::vq) {
        if (s.bits == 0 || s.block_size == 0 || s.group_size == 0)
            throw parameter_error("budget: bits and block sizes must be positive");
        if (s.kind == TargetKind::vq && (s.dim == 0 || s.bits * s.dim > 24))
            throw parameter_error("budget: vq needs 1 ≤ b·d ≤ 24");
    }
    if (s.rank > std::min(s.p, s.q)) throw parameter_error("budget: rank exceeds min(p, q)");
    if (s.permute && s.kind != TargetKind::sq && s.kind != TargetKind::vq)
        throw parameter_error("budget: permutation applies to sq/vq codes only");
}

inline BitBudgetReport budget_reallm(const BudgetSpec& s) {
    validate(s);
    BitBudgetReport r{s.p, s.q, s.m, {}, 0};
    const std::uint64_t m = s.m;
    const std::uint64_t n = s.target_rows() * s.target_cols();
    const bool coded = s.kind == TargetKind::sq || s.kind == TargetKind::vq;

    std::uint64_t code_bits = 0;
    switch (s.kind) {
        case TargetKind::none: break;
        case TargetKind::raw64: code_bits = 64 * n; break;
        case TargetKind::half: code_bits = 16 * n; break;
        case TargetKind::sq:
        case TargetKind::vq: code_bits = std::uint64_t{s.bits} * n; break;
    }
    r.components.push_back({s.has_decoder() ? "embedding" : "codes", m * code_bits});
    r.components.push_back({"codebook", s.kind == TargetKind::vq ? m * codebook_bits(s.dim, s.bits) : 0});
    r.components.push_back(
        {"scales",
         coded ? m * (8 * scale_block_count(n, s.block_size) + 16 * scale_group_count(n, s.block_size, s.group_size))
               : 0,
         true});
    r.components.push_back({"permutations",
                            s.permute ? m * strip_count(s.target_rows(), s.permutation_rows) * s.target_cols() *
                                            index_bits(s.target_cols())
                                      : 0,
                            true});
    const std::uint64_t lr_scales = s.lowrank_bits == 8 ? 16 * 2 * s.rank : 0;
    r.components.push_back({"low_rank", m * (s.lowrank_bits * (s.p + s.q) * s.rank + lr_scales)});
    r.components.push_back({"dora_magnitude", s.dora ? m * 16 * s.q : 0});
    r.components.push_back({"decoder", s.c * s.b_phi});
    r.components.push_back({"decoder_scales", 16 * s.decoder_tensors, true});

    const unsigned tb = s.kind == TargetKind::half ? 16 : s.kind == TargetKind::raw64 ? 64 : s.bits;
    r.table_bits = budget_reallm_table(s.p, s.q, m, s.c, s.b_phi, s.rank, s.has_decoder() ? s.patches * s.e0 * s.e1 * s.e2 : n,
                                       s.kind == TargetKind::none ? 0 : tb, s.kind == TargetKind::vq ? s.dim : 0);
    return r;
}

// text table followed by one key=value record per line
inline std::string render(const BitBudgetReport& r) {
    std::ostringstream os;
    os << "component        bits          bits/coord\n";
    char buf[128];
    for (const auto& c : r.components) {
        std::snprintf(buf, sizeof buf, "%-16s %-13llu %s%s\n", c.name.c_str(), static_cast<unsigned long long>(c.bits),
                      r.per_coordinate(c.bits).str().c_str(), c.extension ? "  (extension)" : "");
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-16s %-13llu %s\n", "total", static_cast<unsigned long long>(r.total_bits()),
                  r.bits_per_coordinate().str().c_str());
    os << buf;
    std::snprintf(buf, sizeof buf, "%-16s %-13llu %s\n", "table_formula", static_cast<unsigned long long>(r.table_bits),
                  r.per_coordinate(r.table_bits).str().c_str());
    os << buf << '\n';
    for (const auto& c : r.components)
        os << "budget component=" << c.name << " bits=" << c.bits << " bpc=" << r.per_coordinate(c.bits).str()
           << " extension=" << (c.extension ? 1 : 0) << '\n';
    os << "budget component=total bits=" << r.total_bits() << " bpc=" << r.bits_per_coordinate().str()
       << " payload_bytes=" << r.payload_bytes() << '\n';
    os << "budget component=table_formula bits=" << r.table_bits << " bpc=" << r.per_coordinate(r.table_bits).str()
       << '\n';
    return os.str();
}

}  // namespace reallm
