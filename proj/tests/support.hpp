#pragma once

#include <random>
#include <vector>

#include "reallm/container.hpp"
#include "reallm/decoder.hpp"
#include "reallm/lowrank.hpp"
#include "reallm/matrix.hpp"
#include "reallm/quantizer.hpp"

namespace reallm::fixtures {

// small random compressed matrix exercising every optional section
inline QuantizedMatrix random_quantized_matrix(Rng& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto coin = [&] { return pick(0, 1) == 1; };

    QuantizedMatrix qm;
    const bool decoder = pick(0, 3) == 0;
    Matrix target;
    if (decoder) {
        const std::size_t s = std::size_t{4} << pick(0, 1);  // 4 or 8
        qm.rows = s * pick(1, 3);
        qm.cols = s * pick(1, 3);
        const std::size_t e0 = pick(0, 1) ? 1 : 2;
        DecoderArch a = patch_arch(s, e0, pick(1, 4), pick(1, 5));
        const unsigned wb = pick(2, 9);
        Decoder d = init_decoder(a, wb, rng());
        d.requantize();
        qm.decoder = store_decoder(d, s);
        const std::size_t patches = (qm.rows / s) * (qm.cols / s);
        target = gaussian_matrix(patches * a.e0, a.e1 * a.e2, rng);
    } else {
        qm.rows = pick(1, 40);
        qm.cols = pick(1, 40);
        target = gaussian_matrix(qm.rows, qm.cols, rng);
    }

    QuantizerConfig cfg;
    cfg.seed = rng();
    cfg.kmeans.max_iterations = 20;
    switch (pick(decoder ? 1 : 0, 4)) {
        case 0: cfg.kind = TargetKind::none; break;
        case 1: cfg.kind = TargetKind::raw64; break;
        case 2: cfg.kind = TargetKind::half; break;
        case 3: cfg.kind = TargetKind::sq; break;
        default: cfg.kind = TargetKind::vq; break;
    }
    if (cfg.kind == TargetKind::sq || cfg.kind == TargetKind::vq) {
        cfg.bits = pick(1, cfg.kind == TargetKind::sq ? 8 : 3);
        cfg.dim = 1;
        if (cfg.kind == TargetKind::vq) {
            std::vector<unsigned> dims;
            for (unsigned d = 1; d <= 4; ++d)
                if (target.size() % d == 0 && cfg.bits * d <= 6) dims.push_back(d);
            cfg.dim = dims[pick(0, static_cast<int>(dims.size()) - 1)];
        }
        cfg.block_size = pick(1, 70);
        cfg.group_size = pick(1, 9);
        cfg.permute = coin();
        cfg.permutation_rows = pick(1, 20);
    }
    qm.target = encode_target(target, cfg);

    if (coin()) {
        const std::size_t r = pick(0, static_cast<int>(std::min<std::size_t>(4, std::min(qm.rows, qm.cols))));
        const unsigned bits = std::vector<unsigned>{8, 16, 64}[pick(0, 2)];
        qm.lowrank = store_lowrank({gaussian_matrix(qm.rows, r, rng), gaussian_matrix(qm.cols, r, rng)}, bits);
    }
    if (coin()) {
        std::vector<double> m(qm.cols);
        for (double& v : m) v = std::uniform_real_distribution<double>(0.01, 5.0)(rng);
        qm.dora = store_magnitudes(m);
    }
    return qm;
}

}  // namespace reallm::fixtures
