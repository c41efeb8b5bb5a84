// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "reallm/reallm.hpp"
#include "support.hpp"

using namespace reallm;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool non_increasing(const std::vector<double>& v, double slack = 0.0) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] * (1 + slack)) return false;
    return true;
}

// ---- 1: budget exactness ----------------------------------------------------------------

Outcome budget_exactness() {
    Outcome o;
    BudgetSpec s{.p = 4096, .q = 4096, .kind = TargetKind::half, .c = 7'200'000, .b_phi = 6, .patches = 64,
                 .e0 = 16, .e1 = 16, .e2 = 16};
    const auto r = budget_reallm(s);
    o.check(r.bits_per_coordinate().str(2) == "2.82", "decoder example is 2.82 bits/coordinate");
    o.check(r.total_bits() == 47'394'304u, "decoder example total bits");
    o.check(permutation_bit_cost(4096, 128) == Rational(3, 32), "permutation cost 0.09375");
    o.check(codebook_bits(4, 2) == 16384u, "codebook cost d=4 b=2");
    o.note("example=" + r.bits_per_coordinate().str() + " perm=" + permutation_bit_cost(4096, 128).str(5) +
           " codebook=" + std::to_string(codebook_bits(4, 2)));
    return o;
}

// ---- 2: serialized size agrees with the budget report --------------------------------------

Outcome serialization_budget() {
    Outcome o;
    Rng rng = make_rng(50);
    int agree = 0;
    for (int t = 0; t < 50; ++t) {
        const auto qm = fixtures::random_quantized_matrix(rng);
        const auto bytes = serialize(qm);
        const auto report = budget_of(qm);
        const std::size_t header = 240 + 8 * (qm.decoder ? qm.decoder->arch.stages.size() : 0);
        agree += bytes.size() - header == report.payload_bytes() && payload_bits(bytes) == report.total_bits();
    }
    o.check(agree == 50, "payload size equals ceil(total bits / 8)");
    o.note(std::to_string(agree) + "/50 configurations agree");
    return o;
}

// ---- 3: SQ/VQ × permutation ablation -------------------------------------------------------

Outcome ablation() {
    Outcome o;
    int vq_perm = 0, vq_sq = 0, sq_perm = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        const Matrix w = planted_columns(512, 512, 8, 0.1, 3000 + s);
        const auto t = run_ablation(w, {.seed = static_cast<std::uint64_t>(s)});
        vq_perm += t.cell("vq+perm").error <= t.cell("vq").error;
        vq_sq += t.cell("vq").error <= t.cell("sq").error;
        sq_perm += t.cell("sq+perm").error <= t.cell("sq").error;
    }
    o.check(vq_perm >= 90, "VQ+perm <= VQ on 90% of seeds");
    o.check(vq_sq >= 90, "VQ <= SQ on 90% of seeds");
    o.check(sq_perm >= 90, "SQ+perm <= SQ on 90% of seeds");
    o.note("vq+perm<=vq " + std::to_string(vq_perm) + "/100, vq<=sq " + std::to_string(vq_sq) +
           "/100, sq+perm<=sq " + std::to_string(sq_perm) + "/100");
    return o;
}

// ---- 4: residual decomposition -----------------------------------------------------------

Outcome residual_decomposition() {
    Outcome o;
    const QuantizerConfig nf3{.kind = TargetKind::sq, .bits = 3, .block_size = 64};
    int wins = 0, monotone = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Matrix w = gaussian_matrix(128, 128, 4000 + s);
        const auto one = residual_decompose(w, nf3, {.rank = 8, .iters = 1});
        wins += one.objective[0] < one.baseline;
        const auto three = residual_decompose(w, nf3, {.rank = 8, .iters = 3});
        monotone += non_increasing(three.objective);
    }
    o.check(wins >= 95, "r=8 beats r=0 on 95% of matrices");
    o.check(monotone == 100, "objective non-increasing over 3 iterations");
    o.note("wins " + std::to_string(wins) + "/100, monotone " + std::to_string(monotone) + "/100");
    return o;
}

// ---- 5: k-means ----------------------------------------------------------------------------

Outcome kmeans() {
    Outcome o;
    Rng rng = make_rng(5);
    bool monotone = true;
    for (int t = 0; t < 10; ++t) {
        const Matrix x = gaussian_matrix(1000, 1 + t % 4, rng);
        monotone = monotone && non_increasing(kmeans_fit(x, 4u << (t % 3), t).distortion_history, 1e-12);
    }
    o.check(monotone, "distortion non-increasing");

    const Matrix base = gaussian_matrix(6, 3, rng);
    std::vector<double> rows;
    for (int rep = 0; rep < 3; ++rep)
        for (std::size_t i = 0; i < base.rows(); ++i) rows.insert(rows.end(), base.row(i).begin(), base.row(i).end());
    const Matrix dup(18, 3, rows);
    bool zero = true;
    for (std::size_t k : {6, 7, 18, 40}) zero = zero && kmeans_fit(dup, k, 1).distortion() == 0.0;
    o.check(zero, "zero distortion when k >= distinct vectors");

    // 4 points: two at the origin, two at (1, 1); the brute-force 2-means optimum is 0
    const Matrix four(4, 2, {0, 0, 0, 0, 1, 1, 1, 1});
    double best = INFINITY;
    for (unsigned mask = 1; mask < 15; ++mask) {
        double total = 0.0;
        for (unsigned side : {0u, 1u}) {
            double cx = 0, cy = 0, n = 0;
            for (unsigned i = 0; i < 4; ++i)
                if (((mask >> i) & 1u) == side) cx += four(i, 0), cy += four(i, 1), n += 1;
            cx /= n, cy /= n;
            for (unsigned i = 0; i < 4; ++i)
                if (((mask >> i) & 1u) == side)
                    total += (four(i, 0) - cx) * (four(i, 0) - cx) + (four(i, 1) - cy) * (four(i, 1) - cy);
        }
        best = std::min(best, total / 4);
    }
    const double got = kmeans_fit(four, 2, 1).distortion();
    o.check(got == best, "4-point example reaches the brute-force optimum");
    o.note("4-point distortion " + fmt("%g", got) + " vs optimum " + fmt("%g", best));
    return o;
}

// ---- 6: gradient checks ------------------------------------------------------------------------

double toy_gradient_gap(std::vector<ToyState> states, const Matrix& x, const Matrix& ref) {
    const auto g = chain_gradients(states, x, ref);
    const double h = 1e-6;
    double worst = 0.0;
    auto probe = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + h;
        const double up = chain_gradients(states, x, ref).loss;
        slot = keep - h;
        const double down = chain_gradients(states, x, ref).loss;
        slot = keep;
        worst = std::max(worst, relative_gap(analytic, (up - down) / (2 * h)));
    };
    for (std::size_t k = 0; k < states.size(); ++k) {
        auto& s = states[k];
        for (std::size_t i = 0; i < s.dora.lowrank.l1.size(); ++i)
            probe(s.dora.lowrank.l1.values()[i], g.blocks[k].l1.values()[i]);
        for (std::size_t i = 0; i < s.dora.lowrank.l2.size(); ++i)
            probe(s.dora.lowrank.l2.values()[i], g.blocks[k].l2.values()[i]);
        for (std::size_t i = 0; i < s.dora.magnitude.size(); ++i) probe(s.dora.magnitude[i], g.blocks[k].magnitude[i]);
    }
    return worst;
}

Outcome gradient_checks() {
    Outcome o;
    const std::vector<DecoderArch> archs{
        DecoderArch{2, 2, 3, {{4, 2}, {1, 2}}},
        DecoderArch{1, 2, 2, {{3, 3}, {1, 1}}},
        DecoderArch{2, 1, 4, {{2, 2}, {3, 1}, {1, 2}}},
    };
    double decoder_worst = 0.0;
    for (std::size_t c = 0; c < archs.size(); ++c) {
        const auto& a = archs[c];
        Decoder d = init_decoder(a, 6, 60 + c);
        Rng rng = make_rng(70 + c);
        std::normal_distribution<double> n(0.0, 0.3);
        for (std::size_t t = 1; t < d.master.size(); t += 2)
            for (double& v : d.master[t]) v = n(rng);
        d.requantize();
        std::vector<LatentTensor> z;
        std::vector<Matrix> targets;
        for (int k = 0; k < 2; ++k) {
            LatentTensor l(a.e0, a.e1, a.e2);
            for (double& v : l.values) v = std::normal_distribution<double>(0.0, 1.0)(rng);
            z.push_back(l);
            targets.push_back(gaussian_matrix(a.output_rows(), a.output_cols(), rng));
        }
        const auto rep = weight_grad_check(d, z, targets);
        o.check(rep.ok() && rep.checked == a.parameter_count() + 2 * z[0].size(),
                "decoder weights and latents, config " + std::to_string(c));
        decoder_worst = std::max(decoder_worst, rep.max_relative_error);
    }

    Rng rng = make_rng(80);
    double toy_worst = 0.0;
    for (int cfg = 0; cfg < 3; ++cfg) {
        const std::size_t p = 6 + cfg, r = 1 + cfg, chain = 1 + cfg % 2;
        std::vector<ToyState> states;
        for (std::size_t k = 0; k < chain; ++k) {
            DoraState d{std::vector<double>(p), {gaussian_matrix(p, r, rng, 0.3), gaussian_matrix(p, r, rng, 0.3)}};
            for (double& m : d.magnitude) m = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
            states.push_back({gaussian_matrix(p, p, rng), d});
        }
        const Matrix x = gaussian_matrix(10, p, rng);
        const Matrix ref = gaussian_matrix(10, p, rng);
        const double gap = toy_gradient_gap(states, x, ref);
        o.check(gap < 1e-4, "toy fine-tune L1, L2, magnitudes, config " + std::to_string(cfg));
        toy_worst = std::max(toy_worst, gap);
    }
    o.note("decoder max rel " + fmt("%.2e", decoder_worst) + ", toy max rel " + fmt("%.2e", toy_worst));
    return o;
}

// ---- 7: QAT vs PTQ ---------------------------------------------------------------------------

Outcome qat_versus_ptq() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    const auto arch = patch_arch(64, 4, 8, 16);
    int wins = 0;
    double ratio_sum = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto patches = decoder_structured_patches(arch, 4, 7000 + s);
        TrainOptions opt{.epochs = 2000, .peak_lr = 1e-2, .mode = WeightMode::qat, .seed = s};
        const auto q = qat_train(patches, arch, 6, opt);
        opt.mode = WeightMode::fp;
        const auto f = qat_train(patches, arch, 6, opt);
        const double qat = reconstruction_loss(q.embeddings, patches, q.decoder, WeightMode::qat);
        const double ptq = reconstruction_loss(f.embeddings, patches, ptq_quantize_decoder(f.decoder), WeightMode::ptq);
        wins += qat <= ptq;
        ratio_sum += qat / ptq;
    }
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;
    o.check(wins >= 16, "QAT <= PTQ on 80% of seeds");
    o.check(minutes <= 30, "within 30 minutes");
    o.note("wins " + std::to_string(wins) + "/20, mean qat/ptq " + fmt("%.3f", ratio_sum / 20) + ", c=" +
           std::to_string(arch.parameter_count()) + ", " + fmt("%.1f", minutes) + " min");
    return o;
}

// ---- 8: DoRA ------------------------------------------------------------------------------------

Outcome dora() {
    Outcome o;
    Rng rng = make_rng(8);
    double worst_unit = 0.0;
    bool exact = true;
    for (int t = 0; t < 20; ++t) {
        const Matrix wq = gaussian_matrix(12, 9, rng);
        const LowRankPair lr{gaussian_matrix(12, 3, rng), gaussian_matrix(9, 3, rng)};
        for (double n : column_norms(dora_direction(wq, lr))) worst_unit = std::max(worst_unit, std::abs(n - 1.0));
        exact = exact && dora_forward(wq, dora_init(wq, lr)) == wq + lr.product();
    }
    o.check(worst_unit <= 1e-9, "direction columns have unit norm");
    o.check(exact, "dora_init reproduces w_q + L1 L2^T exactly");

    CompressConfig cfg;
    cfg.quant = {.kind = TargetKind::sq, .bits = 3, .block_size = 64};
    cfg.decompose = {.rank = 2, .iters = 1};
    cfg.dora = true;
    std::vector<ToyBlock> blocks;
    std::vector<QuantizedMatrix> qms;
    std::vector<std::uint32_t> before;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Matrix w = gaussian_matrix(24, 24, 800 + s, 0.2);
        blocks.push_back(make_toy_block(w, 64, 900 + s));
        qms.push_back(compress(w, cfg).qm);
        before.push_back(frozen_hash(qms.back()));
    }
    const auto f = toy_finetune(blocks, qms, {.block_steps = 50, .e2e_steps = 20});
    bool lower = true, frozen = true;
    for (std::size_t j = 0; j < qms.size(); ++j) {
        lower = lower && f.block_losses[j].back() <= f.block_losses[j].front();
        frozen = frozen && frozen_hash(qms[j]) == before[j] &&
                 frozen_hash(with_finetuned(qms[j], f.states[j], 8)) == before[j];
    }
    o.check(lower, "final block loss <= initial");
    o.check(frozen, "frozen hashes unchanged");
    o.note("max |norm-1| " + fmt("%.1e", worst_unit) + ", block 0 loss " + fmt("%.4g", f.block_losses[0].front()) +
           " -> " + fmt("%.4g", f.block_losses[0].back()));
    return o;
}

// ---- 9: round trips ---------------------------------------------------------------------------

Outcome round_trips() {
    Outcome o;
    Rng rng = make_rng(9);
    const int cases = 1000;
    int perm_ok = 0, patch_ok = 0, pack_ok = 0, container_ok = 0;
    for (int t = 0; t < cases; ++t) {
        const Matrix w = gaussian_matrix(std::uniform_int_distribution<int>(1, 40)(rng),
                                         std::uniform_int_distribution<int>(1, 24)(rng), rng);
        const std::size_t strip = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        const auto ps = permute_strips(w, strip);
        perm_ok += inverse_strips(ps.matrix, ps.perms, strip) == w;

        const std::size_t s = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
        const Matrix m = gaussian_matrix(s * std::uniform_int_distribution<std::size_t>(1, 5)(rng),
                                         s * std::uniform_int_distribution<std::size_t>(1, 5)(rng), rng);
        patch_ok += depatchify(patchify(m, s)) == m;

        const unsigned bits = std::uniform_int_distribution<unsigned>(1, 24)(rng);
        CodeStream cs{bits, std::vector<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, 300)(rng))};
        for (auto& c : cs.codes) c = std::uniform_int_distribution<std::uint32_t>(0, (1u << bits) - 1)(rng);
        pack_ok += CodeStream::unpack(cs.pack(), bits, cs.count()) == cs;

        const auto qm = fixtures::random_quantized_matrix(rng);
        const auto bytes = serialize(qm);
        const auto back = deserialize(bytes);
        container_ok += back == qm && serialize(back) == bytes && dequantize(back) == dequantize(qm);
    }
    o.check(perm_ok == cases, "permutation");
    o.check(patch_ok == cases, "patchify");
    o.check(pack_ok == cases, "code packing");
    o.check(container_ok == cases, "container");
    o.note("permutation " + std::to_string(perm_ok) + ", patchify " + std::to_string(patch_ok) + ", packing " +
           std::to_string(pack_ok) + ", container " + std::to_string(container_ok) + " of " + std::to_string(cases));
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"budget exactness", budget_exactness},
        {"serialization matches budget", serialization_budget},
        {"SQ/VQ x permutation ablation", ablation},
        {"residual decomposition", residual_decomposition},
        {"k-means", kmeans},
        {"gradient checks", gradient_checks},
        {"QAT vs PTQ", qat_versus_ptq},
        {"DoRA", dora},
        {"round trips", round_trips},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !r.pass;
        std::printf("%s criterion %zu: %s (%s) [%.1fs]\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    r.detail.c_str(), sec);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
