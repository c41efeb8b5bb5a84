#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reallm/decoder.hpp"
#include "reallm/errors.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

// every column is one of k random prototype columns plus iid noise
inline Matrix planted_columns(std::size_t p, std::size_t q, std::size_t k, double noise, std::uint64_t seed) {
    if (k < 1) throw parameter_error("planted_columns: k must be ≥ 1");
    Rng rng = make_rng(seed);
    const Matrix proto = gaussian_matrix(p, k, rng);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::normal_distribution<double> n(0.0, noise);
    Matrix w(p, q);
    for (std::size_t j = 0; j < q; ++j) {
        const std::size_t c = pick(rng);
        for (std::size_t i = 0; i < p; ++i) w(i, j) = proto(i, c) + n(rng);
    }
    return w;
}

// iid N(0, 1) with `count` distinct entries replaced by ±magnitude
inline Matrix sparse_outliers(std::size_t p, std::size_t q, std::size_t count, double magnitude, std::uint64_t seed) {
    if (count > p * q) throw parameter_error("sparse_outliers: more outliers than entries");
    Rng rng = make_rng(seed);
    Matrix w = gaussian_matrix(p, q, rng);
    std::vector<std::size_t> idx(p * q);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // partial Fisher-Yates: the first `count` slots are a uniform sample
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng)]);
        w.values()[idx[i]] = std::bernoulli_distribution(0.5)(rng) ? magnitude : -magnitude;
    }
    return w;
}

inline std::size_t count_outliers(const Matrix& w, double threshold) {
    return static_cast<std::size_t>(
        std::count_if(w.values().begin(), w.values().end(), [&](double v) { return std::abs(v) >= threshold; }));
}

// mean over columns of the largest |correlation| with any other column
inline double column_correlation(const Matrix& w) {
    const std::size_t p = w.rows(), q = w.cols();
    if (q < 2) return 0.0;
    Matrix c(p, q);
    for (std::size_t j = 0; j < q; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < p; ++i) mean += w(i, j);
        mean /= static_cast<double>(p);
        double ss = 0.0;
        for (std::size_t i = 0; i < p; ++i) ss += (w(i, j) - mean) * (w(i, j) - mean);
        const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
        for (std::size_t i = 0; i < p; ++i) c(i, j) = (w(i, j) - mean) * inv;
    }
    const Matrix corr = matmul_tn(c, c);
    double total = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        double best = 0.0;
        for (std::size_t k = 0; k < q; ++k)
            if (k != j) best = std::max(best, std::abs(corr(j, k)));
        total += best;
    }
    return total / static_cast<double>(q);
}

//
// Patches produced by a random full-precision decoder of the given
// architecture from N(0, 1) latents: structured data that a decoder of the
// same size can fit closely, so weight quantization error is visible.
//
inline std::vector<Matrix> decoder_structured_patches(const DecoderArch& arch, std::size_t count, std::uint64_t seed) {
    const Decoder teacher = init_decoder(arch, 16, seed);
    Rng rng = make_rng(seed + 1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < count; ++k) {
        LatentTensor z(arch.e0, arch.e1, arch.e2);
        for (double& v : z.values) v = n(rng);
        out.push_back(decoder_forward(z, teacher, WeightMode::fp));
    }
    return out;
}

enum class Generator : std::uint8_t { gaussian, planted, outliers };

inline Generator parse_generator(const std::string& s) {
    if (s == "gaussian") return Generator::gaussian;
    if (s == "planted") return Generator::planted;
    if (s == "outliers") return Generator::outliers;
    throw parameter_error("unknown generator '" + s + "' (gaussian, planted, outliers)");
}

}  // namespace reallm
