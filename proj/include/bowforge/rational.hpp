#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bowforge {

/// Exact rational arithmetic for marked-point positions on the bow circle.
/// Counting predicates (how many p-points left of s, etc.) must be free of
/// floating-point ties, so positions stay rational until they hit numerics.
class Rational {
public:
  Rational() = default;
  Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

  /// Parses "3/10", "-1/4", "2" or a plain decimal like "0.35".
  static Rational parse(const std::string& s) {
    if (auto pos = s.find('/'); pos != std::string::npos) {
      return Rational(std::stoll(s.substr(0, pos)), std::stoll(s.substr(pos + 1)));
    }
    if (auto pos = s.find('.'); pos != std::string::npos) {
      std::string head = s.substr(0, pos), tail = s.substr(pos + 1);
      if (tail.size() > 15) throw std::invalid_argument("rational: too many decimals: " + s);
      std::int64_t den = 1;
      for (size_t i = 0; i < tail.size(); ++i) den *= 10;
      std::int64_t whole = head.empty() || head == "-" ? 0 : std::stoll(head);
      std::int64_t frac = tail.empty() ? 0 : std::stoll(tail);
      bool neg = !head.empty() && head[0] == '-';
      std::int64_t n = (neg ? -1 : 1) * (std::llabs(whole) * den + frac);
      return Rational(n, den);
    }
    return Rational(std::stoll(s));
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.num_, a.den_ * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_, a.den_ * b.num_);
  }
  Rational operator-() const { return Rational(-num_, den_); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
  friend bool operator<(const Rational& a, const Rational& b) {
    return a.num_ * b.den_ < b.num_ * a.den_;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

private:
  void normalize() {
    if (den_ == 0) throw std::invalid_argument("rational: zero denominator");
    if (den_ < 0) { num_ = -num_; den_ = -den_; }
    std::int64_t g = std::gcd(std::llabs(num_), den_);
    if (g > 1) { num_ /= g; den_ /= g; }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace bowforge
