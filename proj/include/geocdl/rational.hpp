#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace geocdl {

/// Exact rational number with a positive, reduced denominator.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_integer() const { return den_ == 1; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Accepts "12", "2.5", "3/4"; optional leading '-'. Returns nullopt on
  /// malformed input or overflow.
  static std::optional<Rational> parse(std::string_view text);

  /// "12", "5/2", "-3/4".
  std::string to_string() const;

  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;

  friend bool operator==(const Rational&, const Rational&) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace geocdl
