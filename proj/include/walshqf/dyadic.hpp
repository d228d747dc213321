#pragma once

// Exact dyadic rationals m * 2^e.
//
// Every scalar produced by the phase-plane machinery (packet coefficients,
// squared projection norms, form values, interval measures) is of this
// form, so all identity checks in the library are exact.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <compare>
#include <concepts>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include "walshqf/errors.hpp"

namespace walshqf {

using BigInt = boost::multiprecision::cpp_int;

/// Largest admissible |exponent| of a canonical DyadicRational.
inline constexpr int kMaxExponent = 4096;

namespace detail {

inline BigInt from_int128(__int128 v) {
  const bool negative = v < 0;
  unsigned __int128 u = negative ? static_cast<unsigned __int128>(-(v + 1)) + 1
                                 : static_cast<unsigned __int128>(v);
  BigInt out = static_cast<std::uint64_t>(u >> 64);
  out <<= 64;
  out += static_cast<std::uint64_t>(u);
  return negative ? BigInt(-out) : out;
}

}  // namespace detail

class DyadicRational {
 public:
  DyadicRational() = default;

  // NOLINTNEXTLINE(google-explicit-constructor): integers are dyadic.
  template <std::integral Int>
  DyadicRational(Int value) : mantissa_(value) {
    canonicalize(0);
  }

  DyadicRational(BigInt mantissa, long long exponent)
      : mantissa_(std::move(mantissa)) {
    canonicalize(exponent);
  }

  static DyadicRational from_int128(__int128 mantissa, long long exponent) {
    return DyadicRational(detail::from_int128(mantissa), exponent);
  }

  /// 2^e.
  static DyadicRational pow2(long long e) { return DyadicRational(BigInt(1), e); }

  const BigInt& mantissa() const noexcept { return mantissa_; }
  int exponent() const noexcept { return exponent_; }

  bool is_zero() const noexcept { return mantissa_.is_zero(); }
  int sign() const noexcept { return mantissa_.sign(); }
  bool is_integer() const noexcept { return exponent_ >= 0; }

  DyadicRational operator-() const {
    DyadicRational r = *this;
    r.mantissa_ = -r.mantissa_;
    return r;
  }

  DyadicRational abs() const { return sign() < 0 ? -*this : *this; }

  /// this * 2^e, exactly.
  DyadicRational shifted(long long e) const {
    if (is_zero()) return {};
    return DyadicRational(mantissa_, static_cast<long long>(exponent_) + e);
  }

  DyadicRational pow(unsigned n) const {
    if (n == 0) return DyadicRational(1);
    BigInt m = boost::multiprecision::pow(mantissa_, n);
    return DyadicRational(std::move(m), static_cast<long long>(exponent_) * n);
  }

  friend DyadicRational operator+(const DyadicRational& a, const DyadicRational& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    const int e = std::min(a.exponent_, b.exponent_);
    BigInt m = a.mantissa_ << (a.exponent_ - e);
    m += b.mantissa_ << (b.exponent_ - e);
    return DyadicRational(std::move(m), e);
  }

  friend DyadicRational operator-(const DyadicRational& a, const DyadicRational& b) {
    return a + (-b);
  }

  friend DyadicRational operator*(const DyadicRational& a, const DyadicRational& b) {
    if (a.is_zero() || b.is_zero()) return {};
    return DyadicRational(a.mantissa_ * b.mantissa_,
                          static_cast<long long>(a.exponent_) + b.exponent_);
  }

  DyadicRational& operator+=(const DyadicRational& o) { return *this = *this + o; }
  DyadicRational& operator-=(const DyadicRational& o) { return *this = *this - o; }
  DyadicRational& operator*=(const DyadicRational& o) { return *this = *this * o; }

  friend bool operator==(const DyadicRational& a, const DyadicRational& b) {
    // Canonical form makes the representation unique.
    return a.exponent_ == b.exponent_ && a.mantissa_ == b.mantissa_;
  }

  friend std::strong_ordering operator<=>(const DyadicRational& a,
                                          const DyadicRational& b) {
    const int sa = a.sign();
    const int sb = b.sign();
    if (sa != sb) return sa <=> sb;
    if (sa == 0) return std::strong_ordering::equal;
    const int e = std::min(a.exponent_, b.exponent_);
    const BigInt lhs = a.mantissa_ << (a.exponent_ - e);
    const BigInt rhs = b.mantissa_ << (b.exponent_ - e);
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  /// Largest integer not exceeding the value.
  BigInt floor() const {
    if (exponent_ >= 0) return mantissa_ << exponent_;
    // Right shifts of negative cpp_int values round differently across Boost
    // releases, so only ever shift the magnitude.
    if (sign() >= 0) return mantissa_ >> (-exponent_);
    BigInt q = -(BigInt(-mantissa_) >> (-exponent_));
    if ((q << (-exponent_)) != mantissa_) q -= 1;
    return q;
  }

  /// Nearest double; reporting only.
  double to_double() const {
    if (is_zero()) return 0.0;
    BigInt m = boost::multiprecision::abs(mantissa_);
    long long e = exponent_;
    const auto bits = static_cast<long long>(boost::multiprecision::msb(m)) + 1;
    if (bits > 64) {
      m >>= static_cast<unsigned>(bits - 64);
      e += bits - 64;
    }
    const double d =
        std::ldexp(static_cast<double>(m.convert_to<std::uint64_t>()), static_cast<int>(e));
    return sign() < 0 ? -d : d;
  }

  /// "m" for integers, "m*2^e" otherwise.
  std::string to_string() const {
    if (exponent_ == 0) return mantissa_.str();
    return mantissa_.str() + "*2^" + std::to_string(exponent_);
  }

  friend std::ostream& operator<<(std::ostream& os, const DyadicRational& d) {
    return os << d.to_string();
  }

 private:
  void canonicalize(long long exponent) {
    if (mantissa_.is_zero()) {
      exponent_ = 0;
      return;
    }
    const unsigned tz = boost::multiprecision::lsb(boost::multiprecision::abs(mantissa_));
    if (tz > 0) {
      mantissa_ >>= tz;
      exponent += tz;
    }
    if (exponent > kMaxExponent || exponent < -kMaxExponent) {
      throw ExponentOverflow("dyadic exponent " + std::to_string(exponent) +
                             " outside configured range; universe too large");
    }
    exponent_ = static_cast<int>(exponent);
  }

  BigInt mantissa_ = 0;
  int exponent_ = 0;
};

enum class ArithOp { add, sub, mul, shift };

/// Uniform entry point for the four exact operations. For `shift`, b must be
/// an integer and the result is a * 2^b.
inline DyadicRational dyadic_arith(const DyadicRational& a, const DyadicRational& b,
                                   ArithOp op) {
  switch (op) {
    case ArithOp::add: return a + b;
    case ArithOp::sub: return a - b;
    case ArithOp::mul: return a * b;
    case ArithOp::shift: {
      if (!b.is_integer()) throw PreconditionFailed("shift amount must be an integer");
      const BigInt amount = b.floor();
      if (amount > 2 * kMaxExponent || amount < -2 * kMaxExponent) {
        throw ExponentOverflow("shift amount outside configured range");
      }
      return a.shifted(amount.convert_to<long long>());
    }
  }
  return {};
}

/// Sums many dyadic values, aligning exponents lazily instead of
/// canonicalizing after every addition.
class DyadicAccumulator {
 public:
  void add(const DyadicRational& v) {
    if (v.is_zero()) return;
    if (empty_) {
      sum_ = v.mantissa();
      exponent_ = v.exponent();
      empty_ = false;
      return;
    }
    if (v.exponent() >= exponent_) {
      sum_ += v.mantissa() << (v.exponent() - exponent_);
    } else {
      sum_ <<= (exponent_ - v.exponent());
      exponent_ = v.exponent();
      sum_ += v.mantissa();
    }
  }
  void subtract(const DyadicRational& v) { add(-v); }

  DyadicRational value() const {
    return empty_ ? DyadicRational() : DyadicRational(sum_, exponent_);
  }

 private:
  BigInt sum_ = 0;
  long long exponent_ = 0;
  bool empty_ = true;
};

}  // namespace walshqf
