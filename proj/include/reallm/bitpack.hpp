#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <climits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reallm/errors.hpp"

namespace reallm {

//
// Little-endian bit packing: the first value occupies the least-significant
// bits of the first byte, values may straddle byte boundaries.
//
class BitWriter {
public:
    void write(std::uint64_t value, unsigned nbits) {
        if (nbits > 64) throw parameter_error("BitWriter: more than 64 bits per value");
        if (nbits < 64) value &= (std::uint64_t{1} << nbits) - 1;
        while (nbits > 0) {
            const std::size_t byte = bits_ / 8;
            const unsigned offset = bits_ % 8;
            if (byte == bytes_.size()) bytes_.push_back(0);
            const unsigned take = std::min(8u - offset, nbits);
            bytes_[byte] |= static_cast<std::uint8_t>((value & ((1u << take) - 1)) << offset);
            value >>= take;
            nbits -= take;
            bits_ += take;
        }
    }

    std::size_t bit_count() const noexcept { return bits_; }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t bits_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes, std::size_t begin_bit = 0,
                       std::size_t end_bit = SIZE_MAX)
        : bytes_(bytes), pos_(begin_bit), end_(std::min(end_bit, bytes.size() * 8)) {}

    bool can_read(unsigned nbits) const noexcept { return pos_ <= end_ && end_ - pos_ >= nbits; }

    std::uint64_t read(unsigned nbits) {
        if (nbits > 64) throw parameter_error("BitReader: more than 64 bits per value");
        if (!can_read(nbits)) throw std::out_of_range("BitReader: read past end of stream");
        std::uint64_t value = 0;
        unsigned got = 0;
        while (got < nbits) {
            const std::size_t byte = pos_ / 8;
            const unsigned offset = pos_ % 8;
            const unsigned take = std::min(8u - offset, nbits - got);
            const std::uint64_t chunk = (bytes_[byte] >> offset) & ((1u << take) - 1);
            value |= chunk << got;
            got += take;
            pos_ += take;
        }
        return value;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return pos_ <= end_ ? end_ - pos_ : 0; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
    std::size_t end_;
};

inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, unsigned bits) {
    BitWriter w;
    for (std::uint32_t c : codes) {
        if (bits < 32 && (c >> bits) != 0)
            throw parameter_error("pack_codes: code " + std::to_string(c) + " exceeds " +
                                  std::to_string(bits) + " bits");
        w.write(c, bits);
    }
    return std::move(w).take();
}

inline std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, unsigned bits,
                                               std::size_t count) {
    BitReader r(bytes);
    std::vector<std::uint32_t> out(count);
    for (auto& c : out) c = static_cast<std::uint32_t>(r.read(bits));
    return out;
}

// bits needed to index `n` distinct values; 0 for n ≤ 1
inline unsigned index_bits(std::size_t n) {
    unsigned b = 0;
    while ((std::size_t{1} << b) < n) ++b;
    return b;
}

}  // namespace reallm
