#include "geocdl/rational.hpp"

#include <cctype>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace geocdl {

namespace {

using i128 = __int128;

Rational from_wide(i128 num, i128 den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  i128 a = num < 0 ? -num : num;
  i128 b = den;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  if (num < lo || num > hi || den > hi) throw std::overflow_error("rational overflow");
  return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g > 1 ? num / g : num;
  den_ = g > 1 ? den / g : den;
}

std::optional<Rational> Rational::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  bool negative = false;
  std::size_t i = 0;
  if (text[0] == '-') {
    negative = true;
    ++i;
  }
  auto read_digits = [&](i128& value, int& count) {
    count = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      value = value * 10 + (text[i] - '0');
      if (value > std::numeric_limits<std::int64_t>::max()) return false;
      ++i;
      ++count;
    }
    return true;
  };
  i128 whole = 0;
  int whole_digits = 0;
  if (!read_digits(whole, whole_digits) || whole_digits == 0) return std::nullopt;
  i128 num = whole;
  i128 den = 1;
  if (i < text.size() && text[i] == '.') {
    ++i;
    int frac_digits = 0;
    i128 frac = 0;
    if (!read_digits(frac, frac_digits) || frac_digits == 0 || frac_digits > 18) return std::nullopt;
    for (int k = 0; k < frac_digits; ++k) den *= 10;
    num = whole * den + frac;
  } else if (i < text.size() && text[i] == '/') {
    ++i;
    i128 d = 0;
    int d_digits = 0;
    if (!read_digits(d, d_digits) || d_digits == 0 || d == 0) return std::nullopt;
    den = d;
  }
  if (i != text.size()) return std::nullopt;
  try {
    return from_wide(negative ? -num : num, den);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::operator+(const Rational& o) const {
  return from_wide(static_cast<i128>(num_) * o.den_ + static_cast<i128>(o.num_) * den_,
                   static_cast<i128>(den_) * o.den_);
}

Rational Rational::operator-(const Rational& o) const {
  return from_wide(static_cast<i128>(num_) * o.den_ - static_cast<i128>(o.num_) * den_,
                   static_cast<i128>(den_) * o.den_);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  const i128 lhs = static_cast<i128>(a.num_) * b.den_;
  const i128 rhs = static_cast<i128>(b.num_) * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

}  // namespace geocdl
