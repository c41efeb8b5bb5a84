#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "reallm/errors.hpp"
#include "reallm/half.hpp"

namespace reallm {

//
// NormalFloat levels: Gaussian-quantile spaced values on [-1, 1] with an
// exact zero. The negative side gets 2^(b-1) levels, the positive side
// 2^(b-1) - 1, both scaled so the outermost level is exactly ±1 (for b = 1
// there is no positive level and the set is {-1, 0}).
//
struct NFLevels {
    unsigned bits = 0;
    std::vector<double> levels;  // strictly increasing

    std::size_t size() const noexcept { return levels.size(); }
};

namespace detail {

inline double normal_quantile(double p) {
    return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
}

// evenly spaced probabilities from `hi` down to 0.5, endpoint excluded
inline std::vector<double> half_quantiles(double hi, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = normal_quantile(hi + (0.5 - hi) * static_cast<double>(i) / static_cast<double>(count));
    return out;
}

}  // namespace detail

inline NFLevels nf_levels(unsigned bits) {
    if (bits < 1 || bits > 8)
        throw parameter_error("nf_levels: bits " + std::to_string(bits) + " outside [1, 8]");
    const std::size_t n = std::size_t{1} << bits;
    const std::size_t negatives = n / 2;
    const std::size_t positives = n / 2 - 1;
    // tail probability: halfway between the 1/(2n) and 1/(2(n-1)) offsets
    const double hi = 1.0 - 0.5 * (1.0 / (2.0 * n) + 1.0 / (2.0 * (n - 1)));
    const double edge = detail::normal_quantile(hi);

    NFLevels out;
    out.bits = bits;
    out.levels.reserve(n);
    for (double v : detail::half_quantiles(hi, negatives)) out.levels.push_back(-v / edge);
    out.levels.push_back(0.0);
    for (double v : detail::half_quantiles(hi, positives)) out.levels.push_back(v / edge);
    std::sort(out.levels.begin(), out.levels.end());
    out.levels.front() = -1.0;
    if (positives > 0) out.levels.back() = 1.0;
    return out;
}

// nearest level index; an exact tie goes to the lower index
inline std::uint32_t nearest_level(const NFLevels& nf, double v) {
    const auto& lv = nf.levels;
    const auto it = std::lower_bound(lv.begin(), lv.end(), v);
    if (it == lv.begin()) return 0;
    if (it == lv.end()) return static_cast<std::uint32_t>(lv.size() - 1);
    const auto hi = static_cast<std::uint32_t>(it - lv.begin());
    const std::uint32_t lo = hi - 1;
    return (v - lv[lo] <= lv[hi] - v) ? lo : hi;
}

constexpr double zero_block_epsilon = 1e-12;

//
// Two-level scale hierarchy: one 8-bit code per block of `block_size`
// values, one 16-bit scale per group of `group_size` blocks. The block scale
// is code/255 · group_scale; codes are rounded up so the reconstructed
// scale never falls below the block's absmax.
//
struct ScaleTree {
    std::size_t block_size = 64;
    std::size_t group_size = 256;
    std::size_t element_count = 0;
    std::vector<std::uint8_t> scale_codes;     // one per block
    std::vector<std::uint16_t> group_scales;   // binary16, one per group

    std::size_t block_count() const noexcept { return scale_codes.size(); }
    std::size_t group_count() const noexcept { return group_scales.size(); }

    double block_scale(std::size_t block) const {
        return scale_codes[block] / 255.0 * half_value(group_scales[block / group_size]);
    }

    std::size_t overhead_bits() const noexcept { return 8 * block_count() + 16 * group_count(); }

    friend bool operator==(const ScaleTree&, const ScaleTree&) = default;
};

inline double nominal_scale_overhead(std::size_t block_size, std::size_t group_size) {
    return 8.0 / static_cast<double>(block_size) +
           16.0 / static_cast<double>(block_size * group_size);
}

inline std::size_t scale_block_count(std::size_t n, std::size_t block_size) {
    return (n + block_size - 1) / block_size;
}

inline std::size_t scale_group_count(std::size_t n, std::size_t block_size, std::size_t group_size) {
    return (scale_block_count(n, block_size) + group_size - 1) / group_size;
}

struct NormalizedBlocks {
    std::vector<double> values;      // in [-1, 1]
    ScaleTree tree;
    std::vector<double> raw_scales;  // max(absmax, ε) per block, before double quantization
};

inline NormalizedBlocks normalize_blocks(std::span<const double> x, std::size_t block_size,
                                         std::size_t group_size = 256) {
    if (block_size < 1) throw parameter_error("normalize_blocks: block_size must be ≥ 1");
    if (group_size < 1) throw parameter_error("normalize_blocks: group_size must be ≥ 1");

    NormalizedBlocks out;
    out.tree.block_size = block_size;
    out.tree.group_size = group_size;
    out.tree.element_count = x.size();
    const std::size_t nblocks = scale_block_count(x.size(), block_size);

    out.raw_scales.resize(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t lo = b * block_size;
        const std::size_t hi = std::min(x.size(), lo + block_size);
        double amax = 0.0;
        for (std::size_t i = lo; i < hi; ++i) amax = std::max(amax, std::abs(x[i]));
        out.raw_scales[b] = std::max(amax, zero_block_epsilon);
    }

    const std::size_t ngroups = (nblocks + group_size - 1) / group_size;
    out.tree.group_scales.resize(ngroups);
    out.tree.scale_codes.resize(nblocks);
    for (std::size_t g = 0; g < ngroups; ++g) {
        const std::size_t lo = g * group_size;
        const std::size_t hi = std::min(nblocks, lo + group_size);
        const double gmax = *std::max_element(out.raw_scales.begin() + lo, out.raw_scales.begin() + hi);
        if (gmax > half_max)
            throw parameter_error("normalize_blocks: block scale " + std::to_string(gmax) +
                                  " exceeds the 16-bit scale range");
        const std::uint16_t gbits = half_bits_ceil(gmax);
        const double gscale = half_value(gbits);
        out.tree.group_scales[g] = gbits;
        for (std::size_t b = lo; b < hi; ++b) {
            const double s = out.raw_scales[b];
            auto code = static_cast<unsigned>(std::ceil(s / gscale * 255.0));
            code = std::clamp(code, 1u, 255u);
            while (code < 255 && code / 255.0 * gscale < s) ++code;
            out.tree.scale_codes[b] = static_cast<std::uint8_t>(code);
        }
    }

    out.values.resize(x.size());
    for (std::size_t b = 0; b < nblocks; ++b) {
        const double s = out.tree.block_scale(b);
        const std::size_t lo = b * block_size;
        const std::size_t hi = std::min(x.size(), lo + block_size);
        for (std::size_t i = lo; i < hi; ++i) out.values[i] = x[i] / s;
    }
    return out;
}

inline std::vector<double> denormalize(std::span<const double> normalized, const ScaleTree& tree) {
    if (normalized.size() != tree.element_count)
        throw dimension_error("denormalize: value count does not match the scale tree");
    std::vector<double> out(normalized.size());
    for (std::size_t i = 0; i < normalized.size(); ++i)
        out[i] = normalized[i] * tree.block_scale(i / tree.block_size);
    return out;
}

struct SqCodes {
    NFLevels levels;
    ScaleTree tree;
    std::vector<std::uint32_t> codes;
};

inline SqCodes sq_quantize(std::span<const double> x, unsigned bits, std::size_t block_size,
                           std::size_t group_size = 256) {
    SqCodes out;
    out.levels = nf_levels(bits);
    auto norm = normalize_blocks(x, block_size, group_size);
    out.tree = std::move(norm.tree);
    out.codes.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.codes[i] = nearest_level(out.levels, norm.values[i]);
    return out;
}

inline std::vector<double> sq_dequantize(const SqCodes& q) {
    if (q.codes.size() != q.tree.element_count)
        throw dimension_error("sq_dequantize: code count does not match the scale tree");
    std::vector<double> out(q.codes.size());
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        if (q.codes[i] >= q.levels.size()) throw structure_error("sq_dequantize: code out of range");
        out[i] = q.levels.levels[q.codes[i]] * q.tree.block_scale(i / q.tree.block_size);
    }
    return out;
}

}  // namespace reallm
