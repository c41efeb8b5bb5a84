#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reallm/bitpack.hpp"
#include "reallm/errors.hpp"
#include "reallm/half.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

//
// 2^(b·d) centroids in dimension d. Values are kept at binary16 precision
// once the codebook is built, so the in-memory codebook is exactly what the
// container stores.
//
struct Codebook {
    unsigned dim = 0;
    unsigned bits_per_dim = 0;
    Matrix centroids;  // k × d

    std::size_t size() const noexcept { return centroids.rows(); }
    unsigned code_bits() const noexcept { return bits_per_dim * dim; }
    std::size_t storage_bits() const noexcept { return 16 * centroids.size(); }

    void round_to_storage() {
        for (double& v : centroids.values()) v = round_to_half(v);
    }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

inline std::size_t codebook_bits(unsigned dim, unsigned bits_per_dim) {
    return std::size_t{16} * dim * (std::size_t{1} << (bits_per_dim * dim));
}

struct KMeansOptions {
    int max_iterations = 300;
};

struct KMeansResult {
    Matrix centroids;                       // k × d
    std::vector<std::uint32_t> assignment;  // one per vector
    std::vector<double> distortion_history; // mean squared distance, after init and each iteration
    int iterations = 0;
    bool converged = false;

    double distortion() const { return distortion_history.back(); }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double t = a[k] - b[k];
        s += t * t;
    }
    return s;
}

struct Nearest {
    std::uint32_t index;
    double d1;  // squared distance to nearest
    double d2;  // squared distance to second nearest
};

inline Nearest nearest_two(const double* x, const Matrix& c) {
    const std::size_t d = c.cols();
    Nearest n{0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < c.rows(); ++j) {
        const double dj = sq_dist(x, c.row(j).data(), d);
        if (dj < n.d1) {
            n.d2 = n.d1;
            n.d1 = dj;
            n.index = static_cast<std::uint32_t>(j);
        } else if (dj < n.d2) {
            n.d2 = dj;
        }
    }
    return n;
}

inline double mean_distortion(const Matrix& x, const Matrix& c, std::span<const std::uint32_t> a) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += sq_dist(x.row(i).data(), c.row(a[i]).data(), x.cols());
    return s / static_cast<double>(x.rows());
}

// kmeans++ seeding
inline Matrix kmeanspp_init(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Matrix c(k, d);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t j = 0; j < k; ++j) {
        std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(j).begin());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], sq_dist(x.row(i).data(), c.row(j).data(), d));
            total += dist[i];
        }
        if (j + 1 == k) break;
        if (total <= 0.0) {
            // every point already coincides with a centroid
            pick = 0;
            continue;
        }
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (u < dist[i]) {
                pick = i;
                break;
            }
            u -= dist[i];
        }
    }
    return c;
}

}  // namespace detail

//
// Lloyd iterations from a kmeans++ start, run with Hamerly's bounds so that
// points whose assignment provably cannot change are skipped. Results are
// those of plain Lloyd with lowest-index tie breaking; the loop ends when
// no assignment changes or after `max_iterations`.
//
inline KMeansResult kmeans_fit(const Matrix& x, std::size_t k, std::uint64_t seed,
                               const KMeansOptions& opt = {}) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n < 1) throw parameter_error("kmeans_fit: need at least one vector");
    if (k < 1) throw parameter_error("kmeans_fit: k must be ≥ 1");
    if (d < 1) throw parameter_error("kmeans_fit: vectors must have dimension ≥ 1");

    Rng rng = make_rng(seed);
    KMeansResult res;
    res.centroids = detail::kmeanspp_init(x, k, rng);
    auto& c = res.centroids;

    res.assignment.resize(n);
    std::vector<double> upper(n), lower(n);
    auto full_assign = [&](std::size_t i) {
        const auto nn = detail::nearest_two(x.row(i).data(), c);
        res.assignment[i] = nn.index;
        upper[i] = std::sqrt(nn.d1);
        lower[i] = std::sqrt(nn.d2);
    };
    for (std::size_t i = 0; i < n; ++i) full_assign(i);
    res.distortion_history.push_back(detail::mean_distortion(x, c, res.assignment));

    constexpr double margin = 1e-9;  // slack for rounding in the accumulated bounds
    std::vector<double> sums(k * d);
    std::vector<std::size_t> counts(k), first(k);
    std::vector<double> moved(k), half_gap(k);
    Matrix old(k, d);

    for (int it = 1; it <= opt.max_iterations; ++it) {
        // update: means accumulated in index order as offsets from the first
        // member, so a cluster of identical vectors keeps that vector exactly
        old = c;
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = res.assignment[i];
            if (counts[a]++ == 0) first[a] = i;
            for (std::size_t t = 0; t < d; ++t) sums[a * d + t] += x(i, t) - x(first[a], t);
        }
        bool repaired = false;
        for (std::size_t j = 0; j < k; ++j)
            if (counts[j] > 0)
                for (std::size_t t = 0; t < d; ++t)
                    c(j, t) = x(first[j], t) + sums[j * d + t] / static_cast<double>(counts[j]);

        // empty clusters are reseeded at the point farthest from its centroid
        std::vector<double> own;
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            if (own.empty()) {
                own.resize(n);
                for (std::size_t i = 0; i < n; ++i)
                    own[i] = detail::sq_dist(x.row(i).data(), c.row(res.assignment[i]).data(), d);
            }
            const auto far = static_cast<std::size_t>(std::max_element(own.begin(), own.end()) - own.begin());
            if (own[far] <= 0.0) break;
            std::copy(x.row(far).begin(), x.row(far).end(), c.row(j).begin());
            own[far] = 0.0;
            repaired = true;
        }

        double max_move = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            moved[j] = std::sqrt(detail::sq_dist(c.row(j).data(), old.row(j).data(), d));
            max_move = std::max(max_move, moved[j]);
        }
        // largest and second largest movement, for the lower-bound update
        std::size_t arg1 = 0;
        double m1 = -1.0, m2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (moved[j] > m1) {
                m2 = std::max(m1, 0.0);
                m1 = moved[j];
                arg1 = j;
            } else if (moved[j] > m2) {
                m2 = moved[j];
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            double g = std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < k; ++l)
                if (l != j) g = std::min(g, detail::sq_dist(c.row(j).data(), c.row(l).data(), d));
            half_gap[j] = 0.5 * std::sqrt(g);
        }

        std::size_t changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = res.assignment[i];
            if (repaired) {
                full_assign(i);
                changed += res.assignment[i] != a;
                continue;
            }
            upper[i] += moved[a];
            lower[i] -= (a == arg1) ? m2 : m1;
            const double bound = std::max(half_gap[a], lower[i]);
            if (upper[i] * (1.0 + margin) < bound) continue;
            upper[i] = std::sqrt(detail::sq_dist(x.row(i).data(), c.row(a).data(), d));
            if (upper[i] * (1.0 + margin) < bound) continue;
            full_assign(i);
            changed += res.assignment[i] != a;
        }

        res.iterations = it;
        res.distortion_history.push_back(detail::mean_distortion(x, c, res.assignment));
        if (changed == 0) {
            res.converged = true;
            break;
        }
    }
    return res;
}

struct CodeStream {
    unsigned code_bits = 0;
    std::vector<std::uint32_t> codes;

    std::size_t count() const noexcept { return codes.size(); }
    std::size_t payload_bits() const noexcept { return code_bits * codes.size(); }

    std::vector<std::uint8_t> pack() const { return pack_codes(codes, code_bits); }

    static CodeStream unpack(std::span<const std::uint8_t> bytes, unsigned code_bits, std::size_t count) {
        return {code_bits, unpack_codes(bytes, code_bits, count)};
    }

    friend bool operator==(const CodeStream&, const CodeStream&) = default;
};

// view a flat array as consecutive d-vectors
inline Matrix as_vectors(std::span<const double> x, std::size_t dim) {
    if (dim == 0 || x.size() % dim != 0)
        throw dimension_error("vector quantization: length " + std::to_string(x.size()) +
                              " is not divisible by d = " + std::to_string(dim));
    return Matrix(x.size() / dim, dim, std::vector<double>(x.begin(), x.end()));
}

inline Codebook build_codebook(std::span<const double> x, unsigned bits_per_dim, unsigned dim,
                               std::uint64_t seed, const KMeansOptions& opt = {},
                               KMeansResult* fit_out = nullptr) {
    if (bits_per_dim * dim < 1 || bits_per_dim * dim > 24)
        throw parameter_error("build_codebook: b·d must lie in [1, 24]");
    const Matrix vecs = as_vectors(x, dim);
    auto fit = kmeans_fit(vecs, std::size_t{1} << (bits_per_dim * dim), seed, opt);
    Codebook cb{dim, bits_per_dim, fit.centroids};
    cb.round_to_storage();
    if (fit_out) *fit_out = std::move(fit);
    return cb;
}

inline CodeStream vq_encode(std::span<const double> x, const Codebook& cb) {
    const Matrix vecs = as_vectors(x, cb.dim);
    CodeStream out{cb.code_bits(), std::vector<std::uint32_t>(vecs.rows())};
    for (std::size_t i = 0; i < vecs.rows(); ++i)
        out.codes[i] = detail::nearest_two(vecs.row(i).data(), cb.centroids).index;
    return out;
}

inline std::vector<double> vq_decode(const CodeStream& codes, const Codebook& cb) {
    std::vector<double> out;
    out.reserve(codes.count() * cb.dim);
    for (std::uint32_t c : codes.codes) {
        if (c >= cb.size())
            throw corruption_error("codes", "index " + std::to_string(c) + " outside codebook of " +
                                                std::to_string(cb.size()));
        const auto r = cb.centroids.row(c);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

// nearest-codeword lookup has no usable derivative: gradients pass straight through
inline std::vector<double> ste_backward(std::span<const double> grad_out) {
    return {grad_out.begin(), grad_out.end()};
}

}  // namespace reallm
