// reallm: compress, inspect and evaluate matrices in the container format.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <typeinfo>
#include <vector>

#include "CLI11.hpp"
#include "reallm/reallm.hpp"

using namespace reallm;

namespace {

// key=value record lines, one per row; values printed with fixed precision
class Record {
public:
    explicit Record(std::string kind) : s_(std::move(kind)) {}
    template <class T>
    Record& kv(const std::string& k, const T& v) {
        std::ostringstream os;
        os << std::boolalpha << ' ' << k << '=' << v;
        s_ += os.str();
        return *this;
    }
    Record& num(const std::string& k, double v, int prec = 9) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        return kv(k, buf);
    }
    const std::string& str() const { return s_; }

private:
    std::string s_;
};

void emit(std::ostream& out, const Record& r) { out << r.str() << '\n'; }

struct Output {
    std::string report_path;
    std::ostringstream buf;

    void flush() {
        std::cout << buf.str();
        if (!report_path.empty()) {
            const auto s = buf.str();
            write_file(report_path, std::vector<std::uint8_t>(s.begin(), s.end()));
        }
    }
};

// ---- gen ------------------------------------------------------------------------

struct GenArgs {
    std::string kind = "gaussian";
    std::size_t rows = 512, cols = 512, k = 8, count = 16;
    double noise = 0.1, magnitude = 20.0;
    std::uint64_t seed = 0;
    unsigned element_bytes = 8;
    std::string out;
};

Matrix generate(const GenArgs& a) {
    switch (parse_generator(a.kind)) {
        case Generator::gaussian: return gaussian_matrix(a.rows, a.cols, a.seed);
        case Generator::planted: return planted_columns(a.rows, a.cols, a.k, a.noise, a.seed);
        case Generator::outliers: return sparse_outliers(a.rows, a.cols, a.count, a.magnitude, a.seed);
    }
    return {};
}

void add_gen_options(CLI::App* c, GenArgs& a) {
    c->add_option("--kind", a.kind, "gaussian | planted | outliers")->capture_default_str();
    c->add_option("--rows", a.rows)->capture_default_str();
    c->add_option("--cols", a.cols)->capture_default_str();
    c->add_option("--prototypes", a.k, "planted: number of prototype columns")->capture_default_str();
    c->add_option("--noise", a.noise, "planted: noise standard deviation")->capture_default_str();
    c->add_option("--outliers", a.count, "outliers: number of entries replaced")->capture_default_str();
    c->add_option("--magnitude", a.magnitude, "outliers: absolute value")->capture_default_str();
    c->add_option("--seed", a.seed)->capture_default_str();
}

void cmd_gen(const GenArgs& a, Output& o) {
    const Matrix m = generate(a);
    save_matrix(a.out, m, a.element_bytes);
    emit(o.buf, Record("gen")
                    .kv("kind", a.kind)
                    .kv("rows", a.rows)
                    .kv("cols", a.cols)
                    .kv("seed", a.seed)
                    .kv("out", a.out)
                    .num("frobenius", frobenius_norm(m))
                    .num("column_correlation", column_correlation(m), 6));
}

// ---- compress ---------------------------------------------------------------------

struct CompressArgs {
    std::string in, out;
    std::string kind = "vq";
    unsigned bits = 3, dim = 2;
    std::size_t block = 64, group = 256, perm_rows = 128;
    bool permute = false;
    std::size_t rank = 64, iters = 3;
    std::string order = "residual";
    unsigned lowrank_bits = 8;
    bool dora = false;
    bool decoder = false;
    std::size_t patch = 64, e0 = 4, e2 = 8, hidden = 16, epochs = 2000;
    unsigned bphi = 6;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

void add_compress_options(CLI::App* c, CompressArgs& a) {
    c->add_option("--kind", a.kind, "codes: vq | sq | half | raw64 | none")->capture_default_str();
    c->add_option("--bits,-b", a.bits, "bits per coordinate (16 selects half storage)")->capture_default_str();
    c->add_option("--dim,-d", a.dim, "vq vector dimension")->capture_default_str();
    c->add_option("--block", a.block, "scale block size")->capture_default_str();
    c->add_option("--group", a.group, "blocks per second-level scale")->capture_default_str();
    c->add_flag("--permute", a.permute, "greedy column permutation per strip");
    c->add_option("--perm-rows", a.perm_rows, "rows per permutation strip")->capture_default_str();
    c->add_option("--rank,-r", a.rank, "low-rank rank (0 disables)")->capture_default_str();
    c->add_option("--iters", a.iters, "alternating decomposition iterations")->capture_default_str();
    c->add_option("--order", a.order, "residual | svd")->capture_default_str();
    c->add_option("--lowrank-bits", a.lowrank_bits, "8 | 16 | 64")->capture_default_str();
    c->add_flag("--dora", a.dora, "store DoRA magnitudes");
    c->add_flag("--decoder", a.decoder, "represent the quantized part with patch embeddings and a decoder");
    c->add_option("--patch", a.patch)->capture_default_str();
    c->add_option("--e0", a.e0, "latent side")->capture_default_str();
    c->add_option("--e2", a.e2, "latent channels")->capture_default_str();
    c->add_option("--hidden", a.hidden, "decoder hidden channels")->capture_default_str();
    c->add_option("--bphi", a.bphi, "decoder weight bits")->capture_default_str();
    c->add_option("--epochs", a.epochs)->capture_default_str();
    c->add_option("--lr", a.lr, "peak learning rate")->capture_default_str();
    c->add_option("--seed", a.seed)->capture_default_str();
}

CompressConfig to_config(const CompressArgs& a) {
    CompressConfig c;
    c.quant.kind = a.bits == 16 && a.kind != "none" && a.kind != "raw64" ? TargetKind::half : parse_target_kind(a.kind);
    c.quant.bits = a.bits;
    c.quant.dim = a.dim;
    c.quant.block_size = a.block;
    c.quant.group_size = a.group;
    c.quant.permute = a.permute;
    c.quant.permutation_rows = a.perm_rows;
    c.quant.seed = a.seed;
    if (c.quant.kind != TargetKind::sq && c.quant.kind != TargetKind::vq) {
        c.quant.bits = 0;
        c.quant.dim = 1;
        c.quant.permute = false;
    }
    if (c.quant.kind == TargetKind::sq) c.quant.dim = 1;
    if (a.order != "residual" && a.order != "svd") throw parameter_error("--order must be residual or svd");
    c.decompose = {.rank = a.rank,
                   .iters = a.iters,
                   .order = a.order == "svd" ? DecomposeOrder::svd_first : DecomposeOrder::residual_first,
                   .lowrank_bits = a.lowrank_bits};
    c.dora = a.dora;
    if (a.decoder) {
        NeuralConfig n{.patch_size = a.patch, .e0 = a.e0, .e2 = a.e2, .hidden = a.hidden, .weight_bits = a.bphi};
        n.train.epochs = a.epochs;
        n.train.peak_lr = a.lr;
        n.train.seed = a.seed;
        c.neural = n;
    }
    return c;
}

void record_config(Output& o, const CompressArgs& a, const CompressConfig& c) {
    auto r = Record("config")
                 .kv("in", a.in)
                 .kv("kind", to_string(c.quant.kind))
                 .kv("bits", c.quant.bits)
                 .kv("dim", c.quant.dim)
                 .kv("block", c.quant.block_size)
                 .kv("group", c.quant.group_size)
                 .kv("permute", c.quant.permute)
                 .kv("perm_rows", c.quant.permutation_rows)
                 .kv("rank", c.decompose.rank)
                 .kv("iters", c.decompose.iters)
                 .kv("order", a.order)
                 .kv("lowrank_bits", c.decompose.lowrank_bits)
                 .kv("dora", c.dora)
                 .kv("decoder", c.neural.has_value())
                 .kv("seed", a.seed);
    if (c.neural)
        r.kv("patch", a.patch).kv("e0", a.e0).kv("e2", a.e2).kv("hidden", a.hidden).kv("bphi", a.bphi).kv("epochs", a.epochs).num(
            "lr", a.lr);
    emit(o.buf, r);
}

void cmd_compress(const CompressArgs& a, Output& o) {
    const Matrix w = load_matrix(a.in);
    const CompressConfig cfg = to_config(a);
    record_config(o, a, cfg);
    const auto res = compress(w, cfg);
    const auto bytes = serialize(res.qm);
    write_file(a.out, bytes);
    o.buf << render(res.budget);
    for (std::size_t i = 0; i < res.objective_history.size(); ++i)
        emit(o.buf, Record("objective").kv("iteration", i + 1).num("value", res.objective_history[i], 17));
    emit(o.buf, Record("compress")
                    .kv("out", a.out)
                    .kv("file_bytes", bytes.size())
                    .kv("payload_bytes", res.budget.payload_bytes())
                    .num("error", res.error, 17)
                    .num("relative_error", res.error / frobenius_norm(w), 9));
}

// ---- decompress / eval --------------------------------------------------------------

struct IoArgs {
    std::string in, out, container;
    unsigned element_bytes = 8;
};

void cmd_decompress(const IoArgs& a, Output& o) {
    const auto qm = deserialize(read_file(a.in));
    const Matrix w = dequantize(qm);
    save_matrix(a.out, w, a.element_bytes);
    emit(o.buf, Record("decompress").kv("in", a.in).kv("out", a.out).kv("rows", w.rows()).kv("cols", w.cols()));
}

struct EvalArgs {
    std::string in, container;
    GenArgs gen;
    std::size_t seeds = 0;
    AblationConfig ablation;
};

void ablation_rows(Output& o, const AblationTable& t, const std::string& source, std::uint64_t seed) {
    for (const auto& c : t.cells)
        emit(o.buf, Record("ablation")
                        .kv("source", source)
                        .kv("seed", seed)
                        .kv("cell", c.name)
                        .kv("block", c.config.block_size)
                        .kv("bpc", c.bits_per_coordinate.str())
                        .num("error", c.error, 12));
}

void print_ablation_table(Output& o, const AblationTable& t) {
    o.buf << "cell      block  bits/coord  frobenius error\n";
    char buf[128];
    for (const auto& c : t.cells) {
        std::snprintf(buf, sizeof buf, "%-9s %-6zu %-11s %.6f\n", c.name.c_str(), c.config.block_size,
                      c.bits_per_coordinate.str().c_str(), c.error);
        o.buf << buf;
    }
}

void cmd_eval(EvalArgs a, Output& o) {
    if (!a.container.empty()) {
        // self-consistency: recompute the error of a container against its source
        const Matrix w = load_matrix(a.in);
        const auto qm = deserialize(read_file(a.container));
        const double err = frobenius_error(w, dequantize(qm));
        const auto b = budget_of(qm);
        emit(o.buf, Record("eval")
                        .kv("in", a.in)
                        .kv("container", a.container)
                        .num("error", err, 17)
                        .num("relative_error", err / frobenius_norm(w), 9)
                        .kv("bpc", b.bits_per_coordinate().str()));
        return;
    }
    emit(o.buf, Record("config")
                    .kv("bits", a.ablation.bits)
                    .kv("dim", a.ablation.dim)
                    .kv("block", a.ablation.block_size)
                    .kv("group", a.ablation.group_size)
                    .kv("perm_rows", a.ablation.permutation_rows)
                    .kv("seed", a.ablation.seed));
    if (!a.in.empty()) {
        const auto t = run_ablation(load_matrix(a.in), a.ablation);
        print_ablation_table(o, t);
        ablation_rows(o, t, a.in, a.ablation.seed);
        return;
    }
    if (a.seeds == 0) throw parameter_error("eval: give --in, --container or --seeds");
    std::size_t vq_perm = 0, vq_sq = 0, sq_perm = 0;
    for (std::size_t s = 0; s < a.seeds; ++s) {
        GenArgs g = a.gen;
        g.seed = a.gen.seed + s;
        AblationConfig cfg = a.ablation;
        cfg.seed = a.ablation.seed + s;
        const auto t = run_ablation(generate(g), cfg);
        if (s == 0) print_ablation_table(o, t);
        ablation_rows(o, t, a.gen.kind, g.seed);
        vq_perm += t.cell("vq+perm").error <= t.cell("vq").error;
        vq_sq += t.cell("vq").error <= t.cell("sq").error;
        sq_perm += t.cell("sq+perm").error <= t.cell("sq").error;
    }
    emit(o.buf, Record("ablation_summary")
                    .kv("seeds", a.seeds)
                    .kv("vq_perm_le_vq", vq_perm)
                    .kv("vq_le_sq", vq_sq)
                    .kv("sq_perm_le_sq", sq_perm));
}

// ---- budget ---------------------------------------------------------------------------

struct BudgetArgs {
    std::string container;
    BudgetSpec spec{.p = 4096, .q = 4096};
    std::string kind = "vq";
    unsigned embed_bits = 0;
};

void cmd_budget(BudgetArgs a, Output& o) {
    if (!a.container.empty()) {
        const auto r = budget_of(deserialize(read_file(a.container)));
        emit(o.buf, Record("config").kv("container", a.container));
        o.buf << render(r);
        return;
    }
    auto& s = a.spec;
    s.kind = parse_target_kind(a.kind);
    if (a.embed_bits == 16) s.kind = TargetKind::half;
    if (s.kind == TargetKind::sq) s.dim = 1;
    emit(o.buf, Record("config")
                    .kv("p", s.p)
                    .kv("q", s.q)
                    .kv("m", s.m)
                    .kv("kind", to_string(s.kind))
                    .kv("bits", s.bits)
                    .kv("dim", s.dim)
                    .kv("block", s.block_size)
                    .kv("group", s.group_size)
                    .kv("permute", s.permute)
                    .kv("perm_rows", s.permutation_rows)
                    .kv("rank", s.rank)
                    .kv("lowrank_bits", s.lowrank_bits)
                    .kv("dora", s.dora)
                    .kv("c", s.c)
                    .kv("bphi", s.b_phi)
                    .kv("patches", s.patches)
                    .kv("e0", s.e0)
                    .kv("e1", s.e1)
                    .kv("e2", s.e2));
    const auto r = budget_reallm(s);
    o.buf << render(r);
    emit(o.buf, Record("reference")
                    .kv("lora_bits", budget_lora(s.p, s.q, s.rank, s.m))
                    .kv("vq_only_bits",
                        s.kind == TargetKind::vq && s.q % s.dim == 0 ? budget_vq_only(s.p, s.q, s.bits, s.dim, s.m) : 0));
}

// ---- train-decoder ------------------------------------------------------------------------

struct TrainArgs {
    std::string in;
    std::size_t patch = 64, e0 = 4, e2 = 8, hidden = 16, epochs = 2000, log_every = 100;
    unsigned bphi = 6;
    double lr = 1e-3;
    std::string mode = "qat";
    std::uint64_t seed = 0;
    bool grad_check = false;
};

void cmd_train_decoder(const TrainArgs& a, Output& o) {
    const Matrix w = load_matrix(a.in);
    const auto grid = patchify(w, a.patch);
    std::vector<Matrix> patches;
    for (const auto& p : grid.patches) patches.push_back(*p);
    const auto arch = patch_arch(a.patch, a.e0, a.e2, a.hidden);
    TrainOptions opt;
    opt.epochs = a.epochs;
    opt.peak_lr = a.lr;
    opt.seed = a.seed;
    opt.mode = a.mode == "qat" ? WeightMode::qat : a.mode == "ptq" ? WeightMode::ptq : a.mode == "fp" ? WeightMode::fp
                                                                                                    : throw parameter_error("--mode must be qat, ptq or fp");
    emit(o.buf, Record("config")
                    .kv("in", a.in)
                    .kv("patch", a.patch)
                    .kv("e0", a.e0)
                    .kv("e2", a.e2)
                    .kv("hidden", a.hidden)
                    .kv("bphi", a.bphi)
                    .kv("epochs", a.epochs)
                    .num("lr", a.lr)
                    .kv("mode", a.mode)
                    .kv("seed", a.seed)
                    .kv("c", arch.parameter_count()));
    const auto r = qat_train(patches, arch, a.bphi, opt);
    for (std::size_t e = 0; e < r.loss_history.size(); ++e)
        if (e % a.log_every == 0 || e + 1 == r.loss_history.size())
            emit(o.buf, Record("loss").kv("epoch", e).num("value", r.loss_history[e], 12));
    const Decoder used = opt.mode == WeightMode::ptq ? ptq_quantize_decoder(r.decoder) : r.decoder;
    emit(o.buf, Record("train").num("final_loss", r.final_loss, 12).kv("decoder_bits", used.storage_bits()));
    if (a.grad_check) {
        std::vector<Matrix> sub(patches.begin(), patches.begin() + std::min<std::size_t>(2, patches.size()));
        std::vector<LatentTensor> z(r.embeddings.begin(), r.embeddings.begin() + sub.size());
        const auto rep = weight_grad_check(r.decoder, z, sub);
        emit(o.buf, Record("grad_check").kv("checked", rep.checked).num("max_relative_error", rep.max_relative_error, 6).kv("ok", rep.ok()));
    }
}

// ---- toy-finetune ---------------------------------------------------------------------------

struct ToyArgs {
    std::vector<std::string> in;
    GenArgs gen;
    std::size_t blocks = 2, samples = 128, rank = 8;
    CompressArgs compress;
    FinetuneOptions opt;
};

void cmd_toy_finetune(ToyArgs a, Output& o) {
    std::vector<Matrix> ws;
    for (const auto& path : a.in) ws.push_back(load_matrix(path));
    for (std::size_t j = ws.size(); j < a.blocks; ++j) {
        GenArgs g = a.gen;
        g.cols = g.rows;
        g.seed = a.gen.seed + j;
        ws.push_back((1.0 / std::sqrt(static_cast<double>(g.rows))) * generate(g));
    }
    a.compress.rank = a.rank;
    const CompressConfig cfg = to_config(a.compress);
    emit(o.buf, Record("config")
                    .kv("blocks", ws.size())
                    .kv("samples", a.samples)
                    .kv("kind", to_string(cfg.quant.kind))
                    .kv("bits", cfg.quant.bits)
                    .kv("dim", cfg.quant.dim)
                    .kv("rank", a.rank)
                    .kv("K", a.opt.block_steps)
                    .kv("T", a.opt.e2e_steps)
                    .num("lr", a.opt.lr)
                    .num("e2e_lr", a.opt.e2e_lr)
                    .kv("seed", a.gen.seed));
    std::vector<ToyBlock> blocks;
    std::vector<QuantizedMatrix> qms;
    std::vector<std::uint32_t> before;
    for (std::size_t j = 0; j < ws.size(); ++j) {
        blocks.push_back(make_toy_block(ws[j], a.samples, a.gen.seed + 1000 + j));
        qms.push_back(compress(ws[j], cfg).qm);
        before.push_back(frozen_hash(qms.back()));
    }
    const auto r = toy_finetune(blocks, qms, a.opt);
    for (std::size_t j = 0; j < r.block_losses.size(); ++j) {
        const auto& l = r.block_losses[j];
        for (std::size_t k = 0; k < l.size(); ++k)
            emit(o.buf, Record("block_loss").kv("block", j).kv("step", k).num("value", l[k], 12));
        emit(o.buf, Record("block_summary")
                        .kv("block", j)
                        .num("initial", l.front(), 12)
                        .num("final", l.back(), 12)
                        .kv("frozen_unchanged", frozen_hash(qms[j]) == before[j]));
    }
    for (std::size_t t = 0; t < r.e2e_losses.size(); ++t)
        emit(o.buf, Record("e2e_loss").kv("step", t).num("value", r.e2e_losses[t], 12));
}

const char* category(const reallm::error& e) {
    if (dynamic_cast<const dimension_error*>(&e)) return "dimension";
    if (dynamic_cast<const parameter_error*>(&e)) return "parameter";
    if (dynamic_cast<const convergence_error*>(&e)) return "convergence";
    if (dynamic_cast<const tiling_error*>(&e)) return "tiling";
    if (dynamic_cast<const structure_error*>(&e)) return "structure";
    if (dynamic_cast<const corruption_error*>(&e)) return "corruption";
    if (dynamic_cast<const format_error*>(&e)) return "format";
    if (dynamic_cast<const version_error*>(&e)) return "version";
    if (dynamic_cast<const training_error*>(&e)) return "training";
    if (dynamic_cast<const gradient_error*>(&e)) return "gradient";
    if (dynamic_cast<const configuration_error*>(&e)) return "configuration";
    return "io";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ReALLM-style matrix compression"};
    app.require_subcommand(1);
    app.fallthrough();
    Output out;
    app.add_option("--report", out.report_path, "also write the report to this file");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "write a synthetic matrix");
    add_gen_options(g, gen);
    g->add_option("--out,-o", gen.out)->required();
    g->add_option("--element-bytes", gen.element_bytes, "4 (float32) or 8 (float64)")->capture_default_str();

    CompressArgs comp;
    auto* c = app.add_subcommand("compress", "compress a matrix file into a container");
    c->add_option("--in,-i", comp.in)->required();
    c->add_option("--out,-o", comp.out)->required();
    add_compress_options(c, comp);

    IoArgs dec;
    auto* d = app.add_subcommand("decompress", "rebuild a matrix file from a container");
    d->add_option("--in,-i", dec.in)->required();
    d->add_option("--out,-o", dec.out)->required();
    d->add_option("--element-bytes", dec.element_bytes)->capture_default_str();

    EvalArgs ev;
    ev.gen.kind = "planted";
    auto* e = app.add_subcommand("eval", "SQ/VQ × permutation ablation, or error of a container");
    e->add_option("--in,-i", ev.in, "matrix file");
    e->add_option("--container", ev.container, "recompute the error of this container against --in");
    e->add_option("--seeds", ev.seeds, "ablation over this many generated matrices");
    add_gen_options(e, ev.gen);
    e->add_option("--bits,-b", ev.ablation.bits)->capture_default_str();
    e->add_option("--dim,-d", ev.ablation.dim)->capture_default_str();
    e->add_option("--block", ev.ablation.block_size)->capture_default_str();
    e->add_option("--group", ev.ablation.group_size)->capture_default_str();
    e->add_option("--perm-rows", ev.ablation.permutation_rows)->capture_default_str();
    e->add_option("--kmeans-seed", ev.ablation.seed)->capture_default_str();

    BudgetArgs bud;
    auto* b = app.add_subcommand("budget", "bit budget of a configuration or a container");
    b->add_option("--container", bud.container);
    b->add_option("-p", bud.spec.p)->capture_default_str();
    b->add_option("-q", bud.spec.q)->capture_default_str();
    b->add_option("-m", bud.spec.m, "matrices sharing the decoder")->capture_default_str();
    b->add_option("--kind", bud.kind, "codes or embeddings: vq | sq | half | raw64 | none")->capture_default_str();
    b->add_option("--bits,-b", bud.spec.bits)->capture_default_str();
    b->add_option("--dim,-d", bud.spec.dim)->capture_default_str();
    b->add_option("--embed-bits", bud.embed_bits, "16 stores embeddings in half precision");
    b->add_option("--block", bud.spec.block_size)->capture_default_str();
    b->add_option("--group", bud.spec.group_size)->capture_default_str();
    b->add_flag("--permute", bud.spec.permute);
    b->add_option("--perm-rows", bud.spec.permutation_rows)->capture_default_str();
    b->add_option("--rank,-r", bud.spec.rank)->capture_default_str();
    b->add_option("--lowrank-bits", bud.spec.lowrank_bits)->capture_default_str();
    b->add_flag("--dora", bud.spec.dora);
    b->add_option("-c", bud.spec.c, "decoder parameter count")->capture_default_str();
    b->add_option("--bphi", bud.spec.b_phi)->capture_default_str();
    b->add_option("--decoder-tensors", bud.spec.decoder_tensors)->capture_default_str();
    b->add_option("--patches", bud.spec.patches)->capture_default_str();
    b->add_option("--e0", bud.spec.e0)->capture_default_str();
    b->add_option("--e1", bud.spec.e1)->capture_default_str();
    b->add_option("--e2", bud.spec.e2)->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train-decoder", "fit embeddings and a decoder to the patches of a matrix");
    t->add_option("--in,-i", tr.in)->required();
    t->add_option("--patch", tr.patch)->capture_default_str();
    t->add_option("--e0", tr.e0)->capture_default_str();
    t->add_option("--e2", tr.e2)->capture_default_str();
    t->add_option("--hidden", tr.hidden)->capture_default_str();
    t->add_option("--bphi", tr.bphi)->capture_default_str();
    t->add_option("--epochs", tr.epochs)->capture_default_str();
    t->add_option("--lr", tr.lr)->capture_default_str();
    t->add_option("--mode", tr.mode, "qat | ptq | fp")->capture_default_str();
    t->add_option("--seed", tr.seed)->capture_default_str();
    t->add_option("--log-every", tr.log_every)->capture_default_str();
    t->add_flag("--grad-check", tr.grad_check, "finite-difference check of the trained decoder");

    ToyArgs toy;
    toy.gen.rows = 64;
    toy.compress.kind = "sq";
    toy.compress.bits = 3;
    auto* f = app.add_subcommand("toy-finetune", "DoRA/low-rank fine-tuning of compressed linear blocks");
    f->add_option("--in,-i", toy.in, "weight matrices, one per block");
    f->add_option("--blocks", toy.blocks, "chain length (generated blocks fill the rest)")->capture_default_str();
    f->add_option("--size", toy.gen.rows, "generated block size")->capture_default_str();
    f->add_option("--kind", toy.gen.kind, "generator for missing blocks")->capture_default_str();
    f->add_option("--seed", toy.gen.seed)->capture_default_str();
    f->add_option("--samples", toy.samples, "calibration rows per block")->capture_default_str();
    f->add_option("--rank,-r", toy.rank)->capture_default_str();
    f->add_option("--codes", toy.compress.kind, "vq | sq | half")->capture_default_str();
    f->add_option("--bits,-b", toy.compress.bits)->capture_default_str();
    f->add_option("--dim,-d", toy.compress.dim)->capture_default_str();
    f->add_option("--block", toy.compress.block)->capture_default_str();
    f->add_option("-K", toy.opt.block_steps, "block-wise steps")->capture_default_str();
    f->add_option("-T", toy.opt.e2e_steps, "end-to-end steps")->capture_default_str();
    f->add_option("--lr", toy.opt.lr)->capture_default_str();
    f->add_option("--e2e-lr", toy.opt.e2e_lr)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) cmd_gen(gen, out);
        if (c->parsed()) cmd_compress(comp, out);
        if (d->parsed()) cmd_decompress(dec, out);
        if (e->parsed()) cmd_eval(ev, out);
        if (b->parsed()) cmd_budget(bud, out);
        if (t->parsed()) cmd_train_decoder(tr, out);
        if (f->parsed()) cmd_toy_finetune(toy, out);
        out.flush();
    } catch (const reallm::error& ex) {
        std::cout << out.buf.str();
        std::cerr << "error [" << category(ex) << "]: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}
