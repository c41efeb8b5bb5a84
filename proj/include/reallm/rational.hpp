#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "reallm/errors.hpp"

namespace reallm {

// exact non-negative-denominator fraction for bit accounting
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT: implicit from integers

    Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
        if (d == 0) throw parameter_error("Rational: zero denominator");
        normalize();
    }

    std::int64_t num() const noexcept { return num_; }
    std::int64_t den() const noexcept { return den_; }
    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    // fixed-point rendering of the nearest double
    std::string str(int decimals = 4) const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", decimals, to_double());
        return buf;
    }

    friend Rational operator+(Rational a, Rational b) {
        const auto g = std::gcd(a.den_, b.den_);
        return Rational(a.num_ * (b.den_ / g) + b.num_ * (a.den_ / g), a.den_ / g * b.den_);
    }
    friend Rational operator-(Rational a, Rational b) { return a + Rational(-b.num_, b.den_); }
    friend Rational operator*(Rational a, Rational b) {
        const auto g1 = std::gcd(a.num_, b.den_);
        const auto g2 = std::gcd(b.num_, a.den_);
        return Rational((a.num_ / (g1 ? g1 : 1)) * (b.num_ / (g2 ? g2 : 1)),
                        (a.den_ / (g2 ? g2 : 1)) * (b.den_ / (g1 ? g1 : 1)));
    }
    friend Rational operator/(Rational a, Rational b) {
        if (b.num_ == 0) throw parameter_error("Rational: division by zero");
        return a * Rational(b.den_, b.num_);
    }

    friend bool operator==(const Rational&, const Rational&) = default;
    friend auto operator<=>(const Rational& a, const Rational& b) {
        return static_cast<__int128>(a.num_) * b.den_ <=> static_cast<__int128>(b.num_) * a.den_;
    }

    friend std::ostream& operator<<(std::ostream& os, const Rational& r) {
        return os << r.num_ << '/' << r.den_;
    }

private:
    void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const auto g = std::gcd(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

}  // namespace reallm
