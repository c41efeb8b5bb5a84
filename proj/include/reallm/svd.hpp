#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

struct SvdOptions {
    int max_sweeps = 100;
    // largest |u_i·u_j| / (‖u_i‖‖u_j‖) tolerated at convergence
    double tolerance = 1e-10;
};

//
// rank-r factors with w ≈ l1 · l2ᵗ; l1 (p×r) carries the singular values,
// l2 (q×r) has orthonormal columns
//
struct TruncatedSvd {
    Matrix l1;
    Matrix l2;
    std::vector<double> singular_values;  // all of them, descending
    int sweeps = 0;
};

namespace detail {

//
// One-sided (Hestenes) Jacobi on the columns of a tall matrix. `cols` holds
// the n columns of an m×n matrix (m ≥ n); on return they are mutually
// orthogonal and `v` (n columns of length n) accumulates the rotations.
//
inline int jacobi_orthogonalize(std::vector<std::vector<double>>& cols,
                                std::vector<std::vector<double>>& v, const SvdOptions& opt) {
    const std::size_t n = cols.size();
    v.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        return s;
    };
    auto rotate = [](std::vector<double>& a, std::vector<double>& b, double c, double s) {
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double x = a[k];
            const double y = b[k];
            a[k] = c * x - s * y;
            b[k] = s * x + c * y;
        }
    };

    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = dot(cols[i], cols[i]);

    double off = 0.0;
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        off = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = sq[i];
                const double beta = sq[j];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(cols[i], cols[j]);
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                if (rel <= opt.tolerance) continue;
                off = std::max(off, rel);

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(cols[i], cols[j], c, s);
                rotate(v[i], v[j], c, s);
                sq[i] = dot(cols[i], cols[i]);
                sq[j] = dot(cols[j], cols[j]);
            }
        }
        if (off <= opt.tolerance) return sweep;
    }
    throw convergence_error("truncated_svd: Jacobi did not converge in " +
                                std::to_string(opt.max_sweeps) + " sweeps",
                            off);
}

}  // namespace detail

inline TruncatedSvd truncated_svd(const Matrix& w, std::size_t rank, const SvdOptions& opt = {}) {
    const std::size_t p = w.rows();
    const std::size_t q = w.cols();
    if (rank < 1 || rank > std::min(p, q))
        throw parameter_error("truncated_svd: rank " + std::to_string(rank) + " outside [1, " +
                              std::to_string(std::min(p, q)) + "]");

    // work on the tall orientation: columns of w if p ≥ q, else columns of wᵗ
    const bool tall = p >= q;
    const std::size_t m = tall ? p : q;
    const std::size_t n = tall ? q : p;
    std::vector<std::vector<double>> cols(n, std::vector<double>(m));
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) {
            if (tall)
                cols[j][i] = w(i, j);
            else
                cols[i][j] = w(i, j);
        }

    std::vector<std::vector<double>> v;
    TruncatedSvd out;
    out.sweeps = detail::jacobi_orthogonalize(cols, v, opt);

    std::vector<double> sigma(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (double x : cols[k]) s += x * x;
        sigma[k] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    out.singular_values.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.singular_values[k] = sigma[order[k]];

    out.l1 = Matrix(p, rank);
    out.l2 = Matrix(q, rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const std::size_t src = order[k];
        const double s = sigma[src];
        if (tall) {
            // w = (U S) Vᵗ with U S = cols
            for (std::size_t i = 0; i < p; ++i) out.l1(i, k) = cols[src][i];
            for (std::size_t j = 0; j < q; ++j) out.l2(j, k) = v[src][j];
        } else {
            // wᵗ = (U S) Vᵗ  =>  w = V S Uᵗ
            if (s == 0.0) continue;
            for (std::size_t i = 0; i < p; ++i) out.l1(i, k) = v[src][i] * s;
            for (std::size_t j = 0; j < q; ++j) out.l2(j, k) = cols[src][j] / s;
        }
    }
    return out;
}

}  // namespace reallm
