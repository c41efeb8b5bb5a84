#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "reallm/bitpack.hpp"
#include "reallm/budget.hpp"
#include "reallm/decoder.hpp"
#include "reallm/errors.hpp"
#include "reallm/half.hpp"
#include "reallm/lowrank.hpp"
#include "reallm/matrix.hpp"
#include "reallm/patch.hpp"
#include "reallm/quantizer.hpp"

namespace reallm {

// decoder weights as stored: b_φ-bit RTN codes and one binary16 scale per tensor
struct StoredDecoder {
    DecoderArch arch;
    unsigned weight_bits = 6;
    std::size_t patch_size = 0;
    std::vector<QuantizedTensor> tensors;

    Decoder as_decoder() const {
        Decoder d{arch, weight_bits, {}, tensors};
        d.master = d.effective(WeightMode::qat);
        return d;
    }

    friend bool operator==(const StoredDecoder&, const StoredDecoder&) = default;
};

inline StoredDecoder store_decoder(const Decoder& d, std::size_t patch_size) {
    return {d.arch, d.weight_bits, patch_size, d.quantized};
}

//
// Everything needed to rebuild one matrix. `target` holds the codes of the
// matrix itself, or, when a decoder is present, of the latent matrix: patch
// k's e0×e1×e2 embedding occupies rows [k·e0, (k+1)·e0) of a
// (patches·e0)×(e1·e2) matrix, channels fastest.
//
struct QuantizedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    TargetEncoding target;
    std::optional<StoredDecoder> decoder;
    std::optional<StoredLowRank> lowrank;
    std::vector<std::uint16_t> dora;  // binary16 magnitudes, empty when absent

    friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;
};

inline std::size_t patch_count(const QuantizedMatrix& qm) {
    if (!qm.decoder) return 0;
    const auto s = qm.decoder->patch_size;
    return (qm.rows / s) * (qm.cols / s);
}

inline Matrix latent_matrix(std::span<const LatentTensor> z) {
    if (z.empty()) throw parameter_error("latent_matrix: no embeddings");
    const auto& f = z.front();
    std::vector<double> v;
    v.reserve(z.size() * f.size());
    for (const auto& t : z) {
        if (t.e0 != f.e0 || t.e1 != f.e1 || t.e2 != f.e2) throw dimension_error("latent_matrix: mixed shapes");
        v.insert(v.end(), t.values.begin(), t.values.end());
    }
    return Matrix(z.size() * f.e0, f.e1 * f.e2, std::move(v));
}

inline std::vector<LatentTensor> split_latents(const Matrix& m, std::size_t e0, std::size_t e1, std::size_t e2) {
    if (m.cols() != e1 * e2 || m.rows() % e0 != 0) throw structure_error("latent matrix does not match the latent shape");
    std::vector<LatentTensor> out(m.rows() / e0, LatentTensor(e0, e1, e2));
    const std::size_t n = e0 * e1 * e2;
    for (std::size_t k = 0; k < out.size(); ++k)
        std::copy(m.data().begin() + k * n, m.data().begin() + (k + 1) * n, out[k].values.begin());
    return out;
}

// Q part only: codes or decoder output, before low-rank and DoRA
inline Matrix dequantize_core(const QuantizedMatrix& qm) {
    const Matrix t = decode_target(qm.target);
    if (!qm.decoder) {
        if (t.rows() != qm.rows || t.cols() != qm.cols) throw structure_error("target shape differs from the matrix");
        return t;
    }
    const auto& sd = *qm.decoder;
    const auto& a = sd.arch;
    const std::size_t s = sd.patch_size;
    if (s == 0 || qm.rows % s != 0 || qm.cols % s != 0 || a.output_rows() != s || a.output_cols() != s)
        throw structure_error("decoder output does not tile the matrix");
    if (sd.tensors.size() != a.tensor_count()) throw structure_error("decoder tensor count differs from its architecture");
    for (std::size_t k = 0; k < sd.tensors.size(); ++k)
        if (sd.tensors[k].codes.size() != a.tensor_size(k)) throw structure_error("decoder tensor size mismatch");
    const auto z = split_latents(t, a.e0, a.e1, a.e2);
    PatchGrid g{s, qm.rows / s, qm.cols / s, {}};
    if (z.size() != g.count()) throw structure_error("embedding count differs from the patch count");
    const Decoder dec = sd.as_decoder();
    for (const auto& zk : z) g.patches.emplace_back(decoder_forward(zk, dec, WeightMode::qat));
    return depatchify(g);
}

inline Matrix dequantize(const QuantizedMatrix& qm) {
    const Matrix core = dequantize_core(qm);
    if (qm.lowrank) {
        if (qm.lowrank->l1.value.rows() != qm.rows || qm.lowrank->l2.value.rows() != qm.cols ||
            qm.lowrank->l1.value.cols() != qm.lowrank->l2.value.cols())
            throw structure_error("low-rank factors do not match the matrix shape");
    }
    if (!qm.dora.empty()) {
        if (qm.dora.size() != qm.cols) throw structure_error("DoRA magnitude count differs from the column count");
        const LowRankPair lr = qm.lowrank ? qm.lowrank->pair() : LowRankPair::zero(qm.rows, qm.cols);
        return dora_forward(core, {magnitude_values(qm.dora), lr});
    }
    return qm.lowrank ? core + qm.lowrank->product() : core;
}

// ---- budget of a stored matrix ----------------------------------------------------

inline BudgetSpec budget_spec(const QuantizedMatrix& qm) {
    const auto& t = qm.target;
    BudgetSpec s{.p = qm.rows, .q = qm.cols, .kind = t.kind, .bits = t.bits, .dim = t.dim};
    if (t.scales) {
        s.block_size = t.scales->block_size;
        s.group_size = t.scales->group_size;
    }
    s.permute = t.permuted();
    s.permutation_rows = t.permutation_rows;
    if (qm.lowrank) {
        s.rank = qm.lowrank->rank();
        s.lowrank_bits = qm.lowrank->l1.bits;
    }
    s.dora = !qm.dora.empty();
    if (qm.decoder) {
        const auto& a = qm.decoder->arch;
        s.c = a.parameter_count();
        s.b_phi = qm.decoder->weight_bits;
        s.decoder_tensors = a.tensor_count();
        s.patches = patch_count(qm);
        s.e0 = a.e0;
        s.e1 = a.e1;
        s.e2 = a.e2;
    }
    return s;
}

inline BitBudgetReport budget_of(const QuantizedMatrix& qm) { return budget_reallm(budget_spec(qm)); }

// ---- file format ------------------------------------------------------------------

constexpr std::array<char, 4> container_magic{'R', 'L', 'Q', 'M'};
constexpr std::uint16_t container_version = 1;

enum class Section : std::uint8_t { codes, codebook, scales, permutations, lowrank, dora, decoder, embedding };
constexpr std::size_t section_count = 8;

inline const char* section_name(Section s) {
    constexpr const char* names[] = {"codes",    "codebook", "scales",  "permutations",
                                     "low_rank", "dora",     "decoder", "embedding"};
    return names[static_cast<std::size_t>(s)];
}

inline std::uint32_t section_tag(Section s) {
    constexpr const char* tags[] = {"CODE", "CBOK", "SCAL", "PERM", "LORA", "DORA", "DECO", "EMBD"};
    const char* t = tags[static_cast<std::size_t>(s)];
    return std::uint32_t(std::uint8_t(t[0])) | std::uint32_t(std::uint8_t(t[1])) << 8 |
           std::uint32_t(std::uint8_t(t[2])) << 16 | std::uint32_t(std::uint8_t(t[3])) << 24;
}

namespace detail {

enum : std::uint16_t { flag_permuted = 1, flag_lowrank = 2, flag_dora = 4, flag_decoder = 8 };

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::size_t position() const noexcept { return pos_; }

private:
    std::uint64_t le(int n) {
        if (b_.size() - pos_ < static_cast<std::size_t>(n)) throw corruption_error("header", "file is truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
        pos_ += n;
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> b) {
    boost::crc_32_type crc;
    crc.process_bytes(b.data(), b.size());
    return crc.checksum();
}

inline std::uint64_t double_bits(double v) { return std::bit_cast<std::uint64_t>(v); }
inline double bits_double(std::uint64_t v) { return std::bit_cast<double>(v); }

inline std::int64_t sign_extend(std::uint64_t v, unsigned bits) {
    const std::uint64_t m = std::uint64_t{1} << (bits - 1);
    return static_cast<std::int64_t>((v ^ m) - m);
}

inline void write_factor(BitWriter& w, const StoredFactor& f) {
    if (f.bits == 8) {
        for (auto c : f.codes) w.write(static_cast<std::uint8_t>(c), 8);
        for (auto s : f.scales) w.write(s, 16);
    } else if (f.bits == 16) {
        for (double v : f.value.values()) w.write(half_bits(v), 16);
    } else {
        for (double v : f.value.values()) w.write(double_bits(v), 64);
    }
}

inline StoredFactor read_factor(BitReader& r, std::size_t rows, std::size_t cols, unsigned bits) {
    StoredFactor f{.bits = bits};
    if (bits == 8) {
        f.codes.resize(rows * cols);
        for (auto& c : f.codes) c = static_cast<std::int8_t>(static_cast<std::uint8_t>(r.read(8)));
        f.scales.resize(cols);
        for (auto& s : f.scales) s = static_cast<std::uint16_t>(r.read(16));
        f.value = factor_from_codes(rows, cols, f.codes, f.scales);
    } else {
        f.value = Matrix(rows, cols);
        for (double& v : f.value.values())
            v = bits == 16 ? half_value(static_cast<std::uint16_t>(r.read(16))) : bits_double(r.read(64));
    }
    return f;
}

// the fields a reader needs before it can size any section
struct Header {
    std::uint16_t flags = 0;
    std::uint32_t rows = 0, cols = 0;
    std::uint8_t kind = 0, bits = 0, dim = 0, lowrank_bits = 0;
    std::uint32_t target_rows = 0, target_cols = 0;
    std::uint32_t block_size = 0, group_size = 0, permutation_rows = 0;
    std::uint32_t rank = 0;
    std::uint32_t patch_size = 0;
    std::uint8_t weight_bits = 0;
    std::uint32_t e0 = 0, e1 = 0, e2 = 0;
    std::vector<StageSpec> stages;

    BudgetSpec budget() const {
        BudgetSpec s{.p = rows, .q = cols, .kind = static_cast<TargetKind>(kind), .bits = bits, .dim = dim};
        s.block_size = block_size;
        s.group_size = group_size;
        s.permute = flags & flag_permuted;
        s.permutation_rows = permutation_rows;
        s.rank = flags & flag_lowrank ? rank : 0;
        s.lowrank_bits = lowrank_bits;
        s.dora = flags & flag_dora;
        if (flags & flag_decoder) {
            DecoderArch a{e0, e1, e2, stages};
            s.c = a.parameter_count();
            s.b_phi = weight_bits;
            s.decoder_tensors = a.tensor_count();
            s.patches = static_cast<std::uint64_t>(rows / patch_size) * (cols / patch_size);
            s.e0 = e0;
            s.e1 = e1;
            s.e2 = e2;
        }
        return s;
    }
};

inline std::uint64_t section_bits(const BitBudgetReport& r, Section s, bool decoder) {
    switch (s) {
        case Section::codes: return decoder ? 0 : r.component("codes");
        case Section::embedding: return decoder ? r.component("embedding") : 0;
        case Section::codebook: return r.component("codebook");
        case Section::scales: return r.component("scales");
        case Section::permutations: return r.component("permutations");
        case Section::lowrank: return r.component("low_rank");
        case Section::dora: return r.component("dora_magnitude");
        case Section::decoder: return r.component("decoder") + r.component("decoder_scales");
    }
    return 0;
}

inline void validate_header(const Header& h) {
    auto bad = [](const std::string& what) { throw format_error("container header: " + what); };
    if (h.rows == 0 || h.cols == 0) bad("empty matrix");
    // size limits keep every derived bit count far from overflow
    constexpr std::uint64_t max_elements = std::uint64_t{1} << 32;
    if (std::uint64_t{h.rows} * h.cols > max_elements) bad("matrix too large");
    if (std::uint64_t{h.target_rows} * h.target_cols > max_elements) bad("target too large");
    if (h.e0 > 4096 || h.e1 > 4096 || h.e2 > 4096) bad("latent too large");
    for (const auto& s : h.stages)
        if (s.out_channels > 4096 || s.upscale > 64) bad("decoder stage too large");
    if (h.kind > static_cast<std::uint8_t>(TargetKind::vq)) bad("unknown quantizer kind");
    const auto kind = static_cast<TargetKind>(h.kind);
    const bool coded = kind == TargetKind::sq || kind == TargetKind::vq;
    if (coded) {
        if (h.bits == 0 || h.block_size == 0 || h.group_size == 0) bad("zero bits or block size");
        if (kind == TargetKind::sq && h.bits > 8) bad("scalar codes wider than 8 bits");
        if (kind == TargetKind::vq && (h.dim == 0 || h.bits * h.dim > 24)) bad("vq needs 1 ≤ b·d ≤ 24");
        if (kind == TargetKind::sq && h.dim != 1) bad("scalar codes with d ≠ 1");
        if (static_cast<std::uint64_t>(h.target_rows) * h.target_cols % h.dim != 0) bad("d does not divide the target");
    } else if (h.bits != 0 || h.dim != 1) {
        bad("bits/dim set for an uncoded target");
    }
    if ((h.flags & flag_permuted) && (!coded || h.permutation_rows == 0)) bad("permutation without codes");
    if (h.permutation_rows == 0) bad("zero permutation strip height");
    if (h.flags & ~std::uint16_t{15}) bad("unknown flags");
    if (h.flags & flag_lowrank) {
        if (h.lowrank_bits != 8 && h.lowrank_bits != 16 && h.lowrank_bits != 64) bad("low-rank bits");
        if (h.rank > std::min(h.rows, h.cols)) bad("rank exceeds min(p, q)");
    } else if (h.rank != 0 || h.lowrank_bits != 0) {
        bad("rank set without low-rank flag");
    }
    if (h.flags & flag_decoder) {
        if (kind == TargetKind::none) bad("decoder without embeddings");
        if (h.weight_bits < 2 || h.weight_bits > 16) bad("decoder weight bits");
        if (h.stages.empty() || h.e0 == 0 || h.e1 == 0 || h.e2 == 0) bad("decoder shape");
        DecoderArch a{h.e0, h.e1, h.e2, h.stages};
        try {
            a.validate();
        } catch (const parameter_error& e) {
            bad(e.what());
        }
        std::uint64_t f = 1;
        for (const auto& s : h.stages) {
            f *= s.upscale;
            if (f > h.rows) bad("decoder upscale exceeds the matrix");
        }
        if (a.parameter_count() > (std::uint64_t{1} << 32)) bad("decoder too large");
        if (h.patch_size == 0 || h.rows % h.patch_size || h.cols % h.patch_size) bad("patch size does not tile");
        if (a.output_rows() != h.patch_size || a.output_cols() != h.patch_size) bad("decoder output is not a patch");
        const std::uint64_t patches = std::uint64_t{h.rows / h.patch_size} * (h.cols / h.patch_size);
        if (h.target_rows != patches * h.e0 || h.target_cols != std::uint64_t{h.e1} * h.e2) bad("latent matrix shape");
    } else {
        if (h.target_rows != h.rows || h.target_cols != h.cols) bad("target shape differs from the matrix");
        if (h.patch_size || h.weight_bits || !h.stages.empty() || h.e0 || h.e1 || h.e2) bad("decoder fields without decoder");
    }
}

}  // namespace detail

//
// Layout (little-endian):
//   "RLQM" u16 version u16 flags | shape and configuration | section table |
//   u32 crc32(payload) u64 payload bytes | payload
// The payload is a single LSB-first bitstream; sections follow each other
// without padding, so its size is ⌈Σ section bits / 8⌉.
//
inline std::vector<std::uint8_t> serialize(const QuantizedMatrix& qm) {
    using namespace detail;
    const auto& t = qm.target;
    const BitBudgetReport report = budget_of(qm);

    Header h;
    h.flags = (t.permuted() ? flag_permuted : 0) | (qm.lowrank ? flag_lowrank : 0) | (qm.dora.empty() ? 0 : flag_dora) |
              (qm.decoder ? flag_decoder : 0);
    h.rows = static_cast<std::uint32_t>(qm.rows);
    h.cols = static_cast<std::uint32_t>(qm.cols);
    h.kind = static_cast<std::uint8_t>(t.kind);
    h.bits = static_cast<std::uint8_t>(t.bits);
    h.dim = static_cast<std::uint8_t>(t.dim);
    h.target_rows = static_cast<std::uint32_t>(t.rows);
    h.target_cols = static_cast<std::uint32_t>(t.cols);
    if (t.scales) {
        h.block_size = static_cast<std::uint32_t>(t.scales->block_size);
        h.group_size = static_cast<std::uint32_t>(t.scales->group_size);
    }
    h.permutation_rows = static_cast<std::uint32_t>(t.permutation_rows);
    if (qm.lowrank) {
        h.rank = static_cast<std::uint32_t>(qm.lowrank->rank());
        h.lowrank_bits = static_cast<std::uint8_t>(qm.lowrank->l1.bits);
    }
    if (qm.decoder) {
        const auto& a = qm.decoder->arch;
        h.patch_size = static_cast<std::uint32_t>(qm.decoder->patch_size);
        h.weight_bits = static_cast<std::uint8_t>(qm.decoder->weight_bits);
        h.e0 = static_cast<std::uint32_t>(a.e0);
        h.e1 = static_cast<std::uint32_t>(a.e1);
        h.e2 = static_cast<std::uint32_t>(a.e2);
        h.stages = a.stages;
    }
    validate_header(h);

    // payload, one section at a time
    BitWriter w;
    std::array<std::uint64_t, section_count> offset{}, length{};
    auto section = [&](Section s, auto&& body) {
        const auto i = static_cast<std::size_t>(s);
        offset[i] = w.bit_count();
        body();
        length[i] = w.bit_count() - offset[i];
        if (length[i] != section_bits(report, s, qm.decoder.has_value()))
            throw structure_error(std::string("serialize: section '") + section_name(s) +
                                  "' disagrees with the budget (inconsistent matrix)");
    };
    auto write_target = [&] {
        switch (t.kind) {
            case TargetKind::none: break;
            case TargetKind::raw64:
                for (double v : t.raw) w.write(double_bits(v), 64);
                break;
            case TargetKind::half:
                for (double v : t.raw) w.write(half_bits(v), 16);
                break;
            case TargetKind::sq:
            case TargetKind::vq:
                for (auto c : t.codes) w.write(c, t.code_bits());
                break;
        }
    };
    section(Section::codes, [&] { if (!qm.decoder) write_target(); });
    section(Section::codebook, [&] {
        if (t.codebook)
            for (double v : t.codebook->centroids.values()) w.write(half_bits(v), 16);
    });
    section(Section::scales, [&] {
        if (!t.scales) return;
        for (auto c : t.scales->scale_codes) w.write(c, 8);
        for (auto g : t.scales->group_scales) w.write(g, 16);
    });
    section(Section::permutations, [&] {
        for (const auto& p : t.permutations)
            for (auto v : p.inverse) w.write(v, index_bits(t.cols));
    });
    section(Section::lowrank, [&] {
        if (!qm.lowrank) return;
        write_factor(w, qm.lowrank->l1);
        write_factor(w, qm.lowrank->l2);
    });
    section(Section::dora, [&] {
        for (auto m : qm.dora) w.write(m, 16);
    });
    section(Section::decoder, [&] {
        if (!qm.decoder) return;
        for (const auto& q : qm.decoder->tensors) {
            for (auto c : q.codes) w.write(static_cast<std::uint64_t>(static_cast<std::int64_t>(c)), qm.decoder->weight_bits);
            w.write(q.scale, 16);
        }
    });
    section(Section::embedding, [&] { if (qm.decoder) write_target(); });
    const std::vector<std::uint8_t> payload = std::move(w).take();

    ByteWriter out;
    for (char c : container_magic) out.u8(static_cast<std::uint8_t>(c));
    out.u16(container_version);
    out.u16(h.flags);
    out.u32(h.rows);
    out.u32(h.cols);
    out.u8(h.kind);
    out.u8(h.bits);
    out.u8(h.dim);
    out.u8(h.lowrank_bits);
    out.u32(h.target_rows);
    out.u32(h.target_cols);
    out.u32(h.block_size);
    out.u32(h.group_size);
    out.u32(h.permutation_rows);
    out.u32(h.rank);
    out.u32(h.patch_size);
    out.u8(h.weight_bits);
    out.u8(static_cast<std::uint8_t>(h.stages.size()));
    out.u16(0);
    out.u32(h.e0);
    out.u32(h.e1);
    out.u32(h.e2);
    for (const auto& s : h.stages) {
        out.u32(static_cast<std::uint32_t>(s.out_channels));
        out.u32(static_cast<std::uint32_t>(s.upscale));
    }
    out.u32(section_count);
    for (std::size_t i = 0; i < section_count; ++i) {
        out.u32(section_tag(static_cast<Section>(i)));
        out.u64(offset[i]);
        out.u64(length[i]);
    }
    out.u32(crc32(payload));
    out.u64(payload.size());
    out.bytes(payload);
    return std::move(out.buffer());
}

inline QuantizedMatrix deserialize(std::span<const std::uint8_t> bytes) {
    using namespace detail;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), container_magic.data(), 4) != 0)
        throw format_error("not a container file (bad magic)");
    ByteReader in(bytes.subspan(4));
    const std::uint16_t version = in.u16();
    if (version != container_version) throw version_error(version, container_version);

    Header h;
    h.flags = in.u16();
    h.rows = in.u32();
    h.cols = in.u32();
    h.kind = in.u8();
    h.bits = in.u8();
    h.dim = in.u8();
    h.lowrank_bits = in.u8();
    h.target_rows = in.u32();
    h.target_cols = in.u32();
    h.block_size = in.u32();
    h.group_size = in.u32();
    h.permutation_rows = in.u32();
    h.rank = in.u32();
    h.patch_size = in.u32();
    h.weight_bits = in.u8();
    const std::size_t stages = in.u8();
    if (in.u16() != 0) throw format_error("container header: reserved field is set");
    h.e0 = in.u32();
    h.e1 = in.u32();
    h.e2 = in.u32();
    for (std::size_t k = 0; k < stages; ++k) {
        const std::size_t oc = in.u32();
        const std::size_t up = in.u32();
        h.stages.push_back({oc, up});
    }
    validate_header(h);

    const BitBudgetReport report = budget_reallm(h.budget());
    if (in.u32() != section_count) throw format_error("container header: unexpected section count");
    std::array<std::uint64_t, section_count> offset{}, length{};
    std::uint64_t cursor = 0;
    for (std::size_t i = 0; i < section_count; ++i) {
        const auto s = static_cast<Section>(i);
        if (in.u32() != section_tag(s)) throw format_error("container header: section table out of order");
        offset[i] = in.u64();
        length[i] = in.u64();
        if (offset[i] != cursor || length[i] != section_bits(report, s, h.flags & flag_decoder))
            throw corruption_error(section_name(s), "section table entry does not match the header");
        cursor += length[i];
    }
    const std::uint32_t crc = in.u32();
    const std::uint64_t payload_bytes = in.u64();
    if (payload_bytes != (cursor + 7) / 8) throw format_error("container header: payload size disagrees with the sections");
    const std::size_t start = 4 + in.position();
    const std::span<const std::uint8_t> payload = bytes.subspan(start);
    if (payload.size() < payload_bytes) {
        for (std::size_t i = 0; i < section_count; ++i)
            if (offset[i] + length[i] > payload.size() * 8)
                throw corruption_error(section_name(static_cast<Section>(i)), "file is truncated");
    }
    if (payload.size() > payload_bytes) throw format_error("trailing bytes after the payload");
    if (crc32(payload) != crc) throw corruption_error("payload", "checksum mismatch");

    auto reader = [&](Section s) {
        const auto i = static_cast<std::size_t>(s);
        return BitReader(payload, offset[i], offset[i] + length[i]);
    };
    const bool decoder = h.flags & flag_decoder;

    QuantizedMatrix qm;
    qm.rows = h.rows;
    qm.cols = h.cols;
    TargetEncoding& t = qm.target;
    t.kind = static_cast<TargetKind>(h.kind);
    t.rows = h.target_rows;
    t.cols = h.target_cols;
    t.bits = h.bits;
    t.dim = h.dim;
    t.permutation_rows = h.permutation_rows;
    const std::size_t n = t.rows * t.cols;
    {
        BitReader r = reader(decoder ? Section::embedding : Section::codes);
        switch (t.kind) {
            case TargetKind::none: break;
            case TargetKind::raw64:
                t.raw.resize(n);
                for (double& v : t.raw) v = bits_double(r.read(64));
                break;
            case TargetKind::half:
                t.raw.resize(n);
                for (double& v : t.raw) v = half_value(static_cast<std::uint16_t>(r.read(16)));
                break;
            case TargetKind::sq:
            case TargetKind::vq:
                t.codes.resize(n / t.dim);
                for (auto& c : t.codes) c = static_cast<std::uint32_t>(r.read(t.code_bits()));
                break;
        }
    }
    if (t.kind == TargetKind::sq || t.kind == TargetKind::vq) {
        BitReader r = reader(Section::scales);
        ScaleTree st{h.block_size, h.group_size, n, {}, {}};
        st.scale_codes.resize(scale_block_count(n, h.block_size));
        for (auto& c : st.scale_codes) c = static_cast<std::uint8_t>(r.read(8));
        st.group_scales.resize(scale_group_count(n, h.block_size, h.group_size));
        for (auto& g : st.group_scales) g = static_cast<std::uint16_t>(r.read(16));
        t.scales = std::move(st);
    }
    if (t.kind == TargetKind::vq) {
        BitReader r = reader(Section::codebook);
        const std::size_t k = std::size_t{1} << (t.bits * t.dim);
        Codebook cb{t.dim, t.bits, Matrix(k, t.dim)};
        for (double& v : cb.centroids.values()) v = half_value(static_cast<std::uint16_t>(r.read(16)));
        t.codebook = std::move(cb);
    }
    if (h.flags & flag_permuted) {
        BitReader r = reader(Section::permutations);
        const unsigned ib = index_bits(t.cols);
        for (std::size_t s = 0; s < strip_count(t.rows, h.permutation_rows); ++s) {
            std::vector<std::uint32_t> inv(t.cols);
            for (auto& v : inv) v = static_cast<std::uint32_t>(r.read(ib));
            try {
                t.permutations.push_back(ColumnPermutation::from_inverse(std::move(inv), h.permutation_rows));
            } catch (const structure_error& e) {
                throw corruption_error("permutations", e.what());
            }
        }
    }
    if (h.flags & flag_lowrank) {
        BitReader r = reader(Section::lowrank);
        StoredLowRank lr;
        lr.l1 = read_factor(r, h.rows, h.rank, h.lowrank_bits);
        lr.l2 = read_factor(r, h.cols, h.rank, h.lowrank_bits);
        qm.lowrank = std::move(lr);
    }
    if (h.flags & flag_dora) {
        BitReader r = reader(Section::dora);
        qm.dora.resize(h.cols);
        for (auto& m : qm.dora) m = static_cast<std::uint16_t>(r.read(16));
    }
    if (decoder) {
        BitReader r = reader(Section::decoder);
        StoredDecoder sd{DecoderArch{h.e0, h.e1, h.e2, h.stages}, h.weight_bits, h.patch_size, {}};
        for (std::size_t k = 0; k < sd.arch.tensor_count(); ++k) {
            QuantizedTensor q;
            q.codes.resize(sd.arch.tensor_size(k));
            for (auto& c : q.codes) c = static_cast<std::int32_t>(sign_extend(r.read(h.weight_bits), h.weight_bits));
            q.scale = static_cast<std::uint16_t>(r.read(16));
            sd.tensors.push_back(std::move(q));
        }
        qm.decoder = std::move(sd);
    }
    return qm;
}

// bits of the payload, excluding header and section table
inline std::uint64_t payload_bits(std::span<const std::uint8_t> file) {
    const auto qm = deserialize(file);
    return budget_of(qm).total_bits();
}

}  // namespace reallm
