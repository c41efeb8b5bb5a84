#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/half.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

//
// Latent embedding of one patch: an e0×e1 grid with e2 channels, stored
// channels-last (index (y·e1 + x)·e2 + c).
//
struct LatentTensor {
    std::size_t e0 = 0, e1 = 0, e2 = 0;
    std::vector<double> values;

    LatentTensor() = default;
    LatentTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : e0(h), e1(w), e2(c), values(h * w * c, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    double& at(std::size_t y, std::size_t x, std::size_t c) { return values[(y * e1 + x) * e2 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return values[(y * e1 + x) * e2 + c]; }

    friend bool operator==(const LatentTensor&, const LatentTensor&) = default;
};

// one decoder stage: 1×1 channel mixing to out·f² channels, pixel shuffle by f
struct StageSpec {
    std::size_t out_channels = 1;
    std::size_t upscale = 1;

    friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct DecoderArch {
    std::size_t e0 = 4, e1 = 4, e2 = 8;
    std::vector<StageSpec> stages;

    std::size_t total_upscale() const {
        std::size_t f = 1;
        for (const auto& s : stages) f *= s.upscale;
        return f;
    }
    std::size_t output_rows() const { return e0 * total_upscale(); }
    std::size_t output_cols() const { return e1 * total_upscale(); }

    std::size_t stage_inputs(std::size_t k) const { return k == 0 ? e2 : stages[k - 1].out_channels; }
    std::size_t stage_outputs(std::size_t k) const {
        return stages[k].out_channels * stages[k].upscale * stages[k].upscale;
    }

    // parameter tensors alternate weight (outputs × inputs), bias (outputs)
    std::size_t tensor_count() const { return 2 * stages.size(); }
    std::size_t tensor_size(std::size_t t) const {
        const std::size_t k = t / 2;
        return t % 2 == 0 ? stage_outputs(k) * stage_inputs(k) : stage_outputs(k);
    }
    std::size_t parameter_count() const {
        std::size_t c = 0;
        for (std::size_t t = 0; t < tensor_count(); ++t) c += tensor_size(t);
        return c;
    }

    void validate() const {
        if (stages.empty()) throw parameter_error("decoder: at least one stage is required");
        if (e0 == 0 || e1 == 0 || e2 == 0) throw parameter_error("decoder: latent dimensions must be positive");
        for (const auto& s : stages)
            if (s.out_channels == 0 || s.upscale == 0)
                throw parameter_error("decoder: stage channels and upscale must be positive");
        if (stages.back().out_channels != 1)
            throw parameter_error("decoder: the last stage must produce one channel");
    }

    friend bool operator==(const DecoderArch&, const DecoderArch&) = default;
};

//
// Square-patch preset: the upscale from e0 to the patch size is split into
// stages of factor ≤ 4, all hidden stages `hidden` channels wide.
//
inline DecoderArch patch_arch(std::size_t patch_size, std::size_t e0, std::size_t e2, std::size_t hidden) {
    if (e0 == 0 || patch_size % e0 != 0)
        throw parameter_error("decoder: latent side " + std::to_string(e0) + " does not divide patch size " +
                              std::to_string(patch_size));
    std::size_t f = patch_size / e0;
    DecoderArch a{e0, e0, e2, {}};
    while (f > 1) {
        std::size_t step = 4;
        while (step > 1 && f % step != 0) --step;
        if (step == 1) step = f;  // prime factor above 4
        a.stages.push_back({hidden, step});
        f /= step;
    }
    if (a.stages.empty()) a.stages.push_back({1, 1});
    a.stages.back().out_channels = 1;
    a.validate();
    return a;
}

enum class WeightMode { fp, qat, ptq };

inline const char* to_string(WeightMode m) {
    switch (m) {
        case WeightMode::fp: return "fp";
        case WeightMode::qat: return "qat";
        case WeightMode::ptq: return "ptq";
    }
    return "?";
}

//
// Per-tensor absmax uniform RTN at `bits` bits: symmetric integer codes in
// [-(2^(b-1)-1), 2^(b-1)-1] times one binary16 scale.
//
struct QuantizedTensor {
    std::vector<std::int32_t> codes;
    std::uint16_t scale = 0;  // binary16 bits

    double value(std::size_t i) const { return codes[i] * half_value(scale); }

    friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline std::int32_t rtn_max_code(unsigned bits) { return (std::int32_t{1} << (bits - 1)) - 1; }

inline QuantizedTensor rtn_quantize(std::span<const double> w, unsigned bits) {
    if (bits < 2 || bits > 16) throw parameter_error("rtn_quantize: bits must lie in [2, 16]");
    const std::int32_t qmax = rtn_max_code(bits);
    double amax = 0.0;
    for (double v : w) amax = std::max(amax, std::abs(v));
    QuantizedTensor q;
    q.codes.assign(w.size(), 0);
    if (amax == 0.0) return q;
    if (amax / qmax > half_max) throw parameter_error("rtn_quantize: scale exceeds the binary16 range");
    q.scale = half_bits(amax / qmax);
    if (q.scale == 0) q.scale = half_min_positive;
    const double s = half_value(q.scale);
    for (std::size_t i = 0; i < w.size(); ++i)
        q.codes[i] = static_cast<std::int32_t>(std::clamp(std::nearbyint(w[i] / s), -double(qmax), double(qmax)));
    return q;
}

struct Decoder {
    DecoderArch arch;
    unsigned weight_bits = 6;
    std::vector<std::vector<double>> master;      // per tensor, float64
    std::vector<QuantizedTensor> quantized;        // per tensor, b_φ-bit view

    std::size_t parameter_count() const { return arch.parameter_count(); }

    // c·b_φ code bits plus one 16-bit scale per tensor
    std::size_t storage_bits() const { return parameter_count() * weight_bits + 16 * arch.tensor_count(); }

    void requantize() {
        quantized.resize(master.size());
        for (std::size_t t = 0; t < master.size(); ++t) quantized[t] = rtn_quantize(master[t], weight_bits);
    }

    // weights the forward pass sees in a given mode
    std::vector<std::vector<double>> effective(WeightMode mode) const {
        if (mode == WeightMode::fp) return master;
        std::vector<std::vector<double>> out(quantized.size());
        for (std::size_t t = 0; t < quantized.size(); ++t) {
            out[t].resize(quantized[t].codes.size());
            for (std::size_t i = 0; i < out[t].size(); ++i) out[t][i] = quantized[t].value(i);
        }
        return out;
    }
};

inline Decoder init_decoder(const DecoderArch& arch, unsigned weight_bits, std::uint64_t seed) {
    arch.validate();
    Decoder d;
    d.arch = arch;
    d.weight_bits = weight_bits;
    Rng rng = make_rng(seed);
    d.master.resize(arch.tensor_count());
    for (std::size_t t = 0; t < arch.tensor_count(); ++t) {
        d.master[t].assign(arch.tensor_size(t), 0.0);
        if (t % 2 == 0) {
            const double fan_in = static_cast<double>(arch.stage_inputs(t / 2));
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
            for (double& v : d.master[t]) v = dist(rng);
        }
    }
    d.requantize();
    return d;
}

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

// activations of one forward pass, kept for the backward pass
struct ForwardTrace {
    std::vector<std::vector<double>> inputs;  // per stage, H·W×C_in channels-last
    std::vector<std::vector<double>> shuffled;  // per stage, pre-activation after pixel shuffle
    std::vector<std::size_t> heights, widths;   // input grid per stage
    std::vector<double> output;                 // final s×s
};

inline ForwardTrace forward_trace(const LatentTensor& z, const DecoderArch& arch,
                                  const std::vector<std::vector<double>>& w) {
    if (z.e0 != arch.e0 || z.e1 != arch.e1 || z.e2 != arch.e2 || z.values.size() != z.e0 * z.e1 * z.e2)
        throw dimension_error("decoder_forward: latent shape does not match the decoder");
    ForwardTrace tr;
    std::vector<double> x = z.values;
    std::size_t h = arch.e0, wd = arch.e1;
    for (std::size_t k = 0; k < arch.stages.size(); ++k) {
        const std::size_t cin = arch.stage_inputs(k);
        const std::size_t cout = arch.stages[k].out_channels;
        const std::size_t f = arch.stages[k].upscale;
        const std::size_t cz = arch.stage_outputs(k);
        const auto& wt = w[2 * k];
        const auto& bias = w[2 * k + 1];
        tr.inputs.push_back(x);
        tr.heights.push_back(h);
        tr.widths.push_back(wd);

        const std::size_t oh = h * f, ow = wd * f;
        std::vector<double> s(oh * ow * cout);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx) {
                const double* in = &x[(y * wd + xx) * cin];
                for (std::size_t o = 0; o < cz; ++o) {
                    double acc = bias[o];
                    const double* wr = &wt[o * cin];
                    for (std::size_t i = 0; i < cin; ++i) acc += wr[i] * in[i];
                    // channel o = (c·f + dy)·f + dx  ->  pixel (y·f+dy, x·f+dx), channel c
                    const std::size_t c = o / (f * f), dy = (o / f) % f, dx = o % f;
                    s[((y * f + dy) * ow + (xx * f + dx)) * cout + c] = acc;
                }
            }
        tr.shuffled.push_back(s);
        const bool last = k + 1 == arch.stages.size();
        if (!last)
            for (double& v : s) v = gelu(v);
        x = std::move(s);
        h = oh;
        wd = ow;
    }
    tr.output = std::move(x);
    return tr;
}

// backward from dL/d(output); accumulates into weight and latent gradients
inline void backward_trace(const ForwardTrace& tr, const DecoderArch& arch,
                           const std::vector<std::vector<double>>& w, std::vector<double> grad,
                           std::vector<std::vector<double>>& grad_w, std::vector<double>& grad_z) {
    for (std::size_t k = arch.stages.size(); k-- > 0;) {
        const std::size_t cin = arch.stage_inputs(k);
        const std::size_t cout = arch.stages[k].out_channels;
        const std::size_t f = arch.stages[k].upscale;
        const std::size_t cz = arch.stage_outputs(k);
        const std::size_t h = tr.heights[k], wd = tr.widths[k];
        const std::size_t ow = wd * f;
        const auto& s = tr.shuffled[k];
        const auto& x = tr.inputs[k];
        const auto& wt = w[2 * k];
        auto& gw = grad_w[2 * k];
        auto& gb = grad_w[2 * k + 1];

        if (k + 1 != arch.stages.size())
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= gelu_grad(s[i]);

        std::vector<double> gx(h * wd * cin, 0.0);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx) {
                const double* in = &x[(y * wd + xx) * cin];
                double* gin = &gx[(y * wd + xx) * cin];
                for (std::size_t o = 0; o < cz; ++o) {
                    const std::size_t c = o / (f * f), dy = (o / f) % f, dx = o % f;
                    const double g = grad[((y * f + dy) * ow + (xx * f + dx)) * cout + c];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    const double* wr = &wt[o * cin];
                    double* gwr = &gw[o * cin];
                    for (std::size_t i = 0; i < cin; ++i) {
                        gwr[i] += g * in[i];
                        gin[i] += g * wr[i];
                    }
                }
            }
        grad = std::move(gx);
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad_z[i] += grad[i];
}

}  // namespace detail

inline Matrix decoder_forward(const LatentTensor& z, const Decoder& dec, WeightMode mode) {
    const auto w = dec.effective(mode);
    auto tr = detail::forward_trace(z, dec.arch, w);
    return Matrix(dec.arch.output_rows(), dec.arch.output_cols(), std::move(tr.output));
}

inline Decoder ptq_quantize_decoder(const Decoder& trained) {
    Decoder d = trained;
    d.requantize();
    return d;
}

// mean squared reconstruction error over all patches
inline double reconstruction_loss(std::span<const LatentTensor> z, std::span<const Matrix> targets,
                                  const Decoder& dec, WeightMode mode) {
    if (z.size() != targets.size()) throw dimension_error("loss: latent and target counts differ");
    const auto w = dec.effective(mode);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < z.size(); ++p) {
        const auto tr = detail::forward_trace(z[p], dec.arch, w);
        require_same_shape(Matrix(dec.arch.output_rows(), dec.arch.output_cols()), targets[p], "loss");
        for (std::size_t i = 0; i < tr.output.size(); ++i) {
            const double d = tr.output[i] - targets[p].values()[i];
            s += d * d;
        }
        n += tr.output.size();
    }
    return s / static_cast<double>(n);
}

struct LossGradients {
    double loss = 0.0;
    std::vector<std::vector<double>> weights;  // w.r.t. the weights used in the forward pass
    std::vector<std::vector<double>> latents;  // per patch
};

inline LossGradients loss_gradients(std::span<const LatentTensor> z, std::span<const Matrix> targets,
                                    const Decoder& dec, const std::vector<std::vector<double>>& w) {
    LossGradients g;
    g.weights.resize(w.size());
    for (std::size_t t = 0; t < w.size(); ++t) g.weights[t].assign(w[t].size(), 0.0);
    g.latents.resize(z.size());
    std::size_t n = 0;
    for (const auto& t : targets) n += t.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t p = 0; p < z.size(); ++p) {
        const auto tr = detail::forward_trace(z[p], dec.arch, w);
        if (tr.output.size() != targets[p].size()) throw dimension_error("loss: target shape mismatch");
        std::vector<double> grad(tr.output.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double d = tr.output[i] - targets[p].values()[i];
            g.loss += d * d * inv_n;
            grad[i] = 2.0 * d * inv_n;
        }
        g.latents[p].assign(z[p].size(), 0.0);
        detail::backward_trace(tr, dec.arch, w, std::move(grad), g.weights, g.latents[p]);
    }
    return g;
}

struct TrainOptions {
    std::size_t epochs = 2000;
    double peak_lr = 1e-3;
    WeightMode mode = WeightMode::qat;
    std::uint64_t seed = 0;
    bool half_latents = true;  // embeddings are stored at 16 bits
    // called after every update with (epoch, decoder, loss before the update)
    std::function<void(std::size_t, const Decoder&, double)> observer;
};

struct TrainResult {
    std::vector<LatentTensor> embeddings;
    Decoder decoder;
    std::vector<double> loss_history;  // one entry per epoch, before that epoch's update
    double final_loss = 0.0;           // with stored (quantized) weights and latents
};

namespace detail {

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;

    void step(std::vector<double>& param, const std::vector<double>& grad, double lr, std::size_t t) {
        if (m.empty()) {
            m.assign(param.size(), 0.0);
            v.assign(param.size(), 0.0);
        }
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

inline std::vector<LatentTensor> stored_latents(const std::vector<LatentTensor>& z, bool half) {
    if (!half) return z;
    auto out = z;
    for (auto& t : out)
        for (double& v : t.values) v = round_to_half(v);
    return out;
}

}  // namespace detail

inline double cosine_lr(double peak, std::size_t epoch, std::size_t epochs) {
    return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

//
// Overfits embeddings and decoder to a set of patches with Adam under a
// cosine schedule. In qat mode the forward pass sees b_φ-bit weights (and
// binary16 latents) and their gradients are applied to the float64 masters
// unchanged (straight-through). fp and ptq modes train the masters directly;
// the quantized view is refreshed at the end, and final_loss is measured in
// the requested mode (ptq: RTN weights after training).
//
inline TrainResult qat_train(std::span<const Matrix> patches, const DecoderArch& arch, unsigned weight_bits,
                             const TrainOptions& opt) {
    arch.validate();
    if (patches.empty()) throw parameter_error("qat_train: no patches");
    for (const auto& p : patches)
        if (p.rows() != arch.output_rows() || p.cols() != arch.output_cols())
            throw dimension_error("qat_train: patch shape does not match the decoder output");

    TrainResult res;
    res.decoder = init_decoder(arch, weight_bits, opt.seed);
    Rng rng = make_rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> unit(0.0, 1.0);
    res.embeddings.assign(patches.size(), LatentTensor(arch.e0, arch.e1, arch.e2));
    for (auto& z : res.embeddings)
        for (double& v : z.values) v = unit(rng);

    auto& dec = res.decoder;
    std::vector<detail::Adam> wopt(dec.master.size()), zopt(patches.size());
    const bool quantized_forward = opt.mode == WeightMode::qat;

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        if (quantized_forward) dec.requantize();
        const auto w = dec.effective(quantized_forward ? WeightMode::qat : WeightMode::fp);
        const auto zf = detail::stored_latents(res.embeddings, quantized_forward && opt.half_latents);
        auto g = loss_gradients(zf, patches, dec, w);
        if (!std::isfinite(g.loss)) throw training_error("qat_train: loss is not finite", epoch);
        res.loss_history.push_back(g.loss);

        const double lr = cosine_lr(opt.peak_lr, epoch, opt.epochs);
        for (std::size_t t = 0; t < dec.master.size(); ++t) wopt[t].step(dec.master[t], g.weights[t], lr, epoch + 1);
        for (std::size_t p = 0; p < patches.size(); ++p)
            zopt[p].step(res.embeddings[p].values, g.latents[p], lr, epoch + 1);
        if (quantized_forward) dec.requantize();
        if (opt.observer) opt.observer(epoch, dec, g.loss);
    }
    dec.requantize();
    res.embeddings = detail::stored_latents(res.embeddings, opt.half_latents);
    res.final_loss = reconstruction_loss(res.embeddings, patches, dec, opt.mode);
    if (!std::isfinite(res.final_loss)) throw training_error("qat_train: loss is not finite", opt.epochs);
    return res;
}

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::vector<std::string> offending;

    bool ok() const noexcept { return offending.empty(); }
};

inline double relative_gap(double analytic, double numeric, double floor = 1e-5) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

//
// Compares the analytic gradients (fp mode) of the reconstruction loss with
// central finite differences for every weight and latent coordinate.
//
inline GradCheckReport weight_grad_check(const Decoder& dec, std::span<const LatentTensor> z,
                                         std::span<const Matrix> targets, double tolerance = 1e-4,
                                         double step = 1e-5, bool raise = false) {
    const auto g = loss_gradients(z, targets, dec, dec.master);
    GradCheckReport rep;
    auto record = [&](const std::string& name, double a, double n) {
        const double r = relative_gap(a, n);
        rep.max_relative_error = std::max(rep.max_relative_error, r);
        ++rep.checked;
        if (r > tolerance) rep.offending.push_back(name);
    };

    Decoder probe = dec;
    for (std::size_t t = 0; t < dec.master.size(); ++t)
        for (std::size_t i = 0; i < dec.master[t].size(); ++i) {
            const double v = dec.master[t][i];
            probe.master[t][i] = v + step;
            const double lp = reconstruction_loss(z, targets, probe, WeightMode::fp);
            probe.master[t][i] = v - step;
            const double lm = reconstruction_loss(z, targets, probe, WeightMode::fp);
            probe.master[t][i] = v;
            record("tensor" + std::to_string(t) + "[" + std::to_string(i) + "]", g.weights[t][i],
                   (lp - lm) / (2 * step));
        }
    std::vector<LatentTensor> zp(z.begin(), z.end());
    for (std::size_t p = 0; p < zp.size(); ++p)
        for (std::size_t i = 0; i < zp[p].size(); ++i) {
            const double v = zp[p].values[i];
            zp[p].values[i] = v + step;
            const double lp = reconstruction_loss(zp, targets, dec, WeightMode::fp);
            zp[p].values[i] = v - step;
            const double lm = reconstruction_loss(zp, targets, dec, WeightMode::fp);
            zp[p].values[i] = v;
            record("latent" + std::to_string(p) + "[" + std::to_string(i) + "]", g.latents[p][i],
                   (lp - lm) / (2 * step));
        }
    if (raise && !rep.ok()) {
        std::string list;
        for (std::size_t i = 0; i < std::min<std::size_t>(rep.offending.size(), 8); ++i)
            list += (i ? ", " : "") + rep.offending[i];
        throw gradient_error("weight_grad_check: " + std::to_string(rep.offending.size()) +
                             " gradients disagree with finite differences: " + list);
    }
    return rep;
}

}  // namespace reallm
