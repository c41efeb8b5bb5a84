#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace reallm {

//
// IEEE 754 binary16 conversions. Encoding goes straight from double with
// round-to-nearest-even (no intermediate float, so no double rounding).
//
inline std::uint16_t half_bits(double x) {
    const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
    if (std::isnan(x)) return 0x7e00u;
    const double a = std::abs(x);
    if (a >= 65520.0) return sign | 0x7c00u;  // rounds past 65504
    if (a < 0x1p-14) {
        // subnormal: integer multiple of 2^-24; exact scaling then RNE
        const auto m = static_cast<std::uint16_t>(std::nearbyint(a * 0x1p24));
        return sign | m;  // m == 1024 lands on the smallest normal
    }
    int e2 = 0;
    const double f = std::frexp(a, &e2);  // a = f·2^e2, f in [0.5, 1)
    int e = e2 - 1;
    auto m = static_cast<std::uint32_t>(std::nearbyint((f * 2.0 - 1.0) * 1024.0));
    if (m == 1024) {
        m = 0;
        ++e;
    }
    if (e + 15 >= 31) return sign | 0x7c00u;
    return static_cast<std::uint16_t>(sign | (static_cast<std::uint32_t>(e + 15) << 10) | m);
}

inline double half_value(std::uint16_t h) {
    const double sign = (h & 0x8000u) ? -1.0 : 1.0;
    const int e = (h >> 10) & 0x1f;
    const int m = h & 0x3ff;
    if (e == 0) return sign * std::ldexp(static_cast<double>(m), -24);
    if (e == 31)
        return m == 0 ? sign * std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::quiet_NaN();
    return sign * std::ldexp(1.0 + m / 1024.0, e - 15);
}

inline double round_to_half(double x) { return half_value(half_bits(x)); }

// smallest non-negative half ≥ x (x ≥ 0); infinity when x exceeds the half range
inline std::uint16_t half_bits_ceil(double x) {
    std::uint16_t h = half_bits(x);
    if (half_value(h) < x) ++h;  // positive halves are ordered like their bit patterns
    return h;
}

constexpr std::uint16_t half_min_positive = 0x0001u;
constexpr double half_max = 65504.0;

}  // namespace reallm
