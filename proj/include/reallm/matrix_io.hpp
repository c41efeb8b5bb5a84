#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "reallm/errors.hpp"
#include "reallm/matrix.hpp"

namespace reallm {

//
// Matrix file: u32 rows, u32 cols, u32 element bytes (4 or 8), u32 zero,
// then rows·cols little-endian IEEE values, row-major.
//
inline std::vector<std::uint8_t> encode_matrix(const Matrix& m, unsigned element_bytes = 8) {
    if (element_bytes != 4 && element_bytes != 8) throw parameter_error("matrix file: element size must be 4 or 8");
    std::vector<std::uint8_t> out;
    auto put = [&](std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put(m.rows(), 4);
    put(m.cols(), 4);
    put(element_bytes, 4);
    put(0, 4);
    for (double v : m.values()) {
        if (element_bytes == 8)
            put(std::bit_cast<std::uint64_t>(v), 8);
        else
            put(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
    return out;
}

inline Matrix decode_matrix(const std::vector<std::uint8_t>& b) {
    auto get = [&](std::size_t at, int n) {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
        return v;
    };
    if (b.size() < 16) throw format_error("matrix file: shorter than its header");
    const std::uint64_t rows = get(0, 4), cols = get(4, 4), eb = get(8, 4);
    if (eb != 4 && eb != 8) throw format_error("matrix file: element size must be 4 or 8");
    if (get(12, 4) != 0) throw format_error("matrix file: reserved header field is set");
    if (rows == 0 || cols == 0) throw format_error("matrix file: empty shape");
    if ((b.size() - 16) % eb != 0 || (b.size() - 16) / eb / cols != rows || (b.size() - 16) / eb % cols != 0)
        throw format_error("matrix file: data length does not match its shape");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::size_t at = 16 + i * eb;
        m.values()[i] = eb == 8 ? std::bit_cast<double>(get(at, 8))
                                : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get(at, 4))));
    }
    if (!m.all_finite()) throw format_error("matrix file: non-finite entries");
    return m;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw error("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw error("write to '" + path + "' failed");
}

inline Matrix load_matrix(const std::string& path) { return decode_matrix(read_file(path)); }
inline void save_matrix(const std::string& path, const Matrix& m, unsigned element_bytes = 8) {
    write_file(path, encode_matrix(m, element_bytes));
}

}  // namespace reallm
