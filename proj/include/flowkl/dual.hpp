#pragma once

#include <cmath>

namespace flowkl {

/// First-order forward-mode number: value + tangent * e, e^2 = 0.
struct Dual {
  double value = 0.0;
  double tangent = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double v, double t) : value(v), tangent(t) {}
};

/// Second-order directional jet: f(x + s e) ~ value + first s + second s^2 / 2.
///
/// This is dual-over-dual with the two infinitesimals collapsed onto the same
/// direction, so `second` carries e^T H e.
struct Dual2 {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;

  constexpr Dual2() = default;
  constexpr Dual2(double v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual2(double v, double d1, double d2) : value(v), first(d1), second(d2) {}
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value; }
inline double value_of(const Dual2& x) { return x.value; }

// ---- Dual -------------------------------------------------------------------

inline Dual operator-(const Dual& a) { return {-a.value, -a.tangent}; }
inline Dual operator+(const Dual& a, const Dual& b) { return {a.value + b.value, a.tangent + b.tangent}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.value - b.value, a.tangent - b.tangent}; }
inline Dual operator*(const Dual& a, const Dual& b) {
  return {a.value * b.value, a.tangent * b.value + a.value * b.tangent};
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double q = a.value / b.value;
  return {q, (a.tangent - q * b.tangent) / b.value};
}
inline Dual operator+(const Dual& a, double b) { return {a.value + b, a.tangent}; }
inline Dual operator+(double a, const Dual& b) { return {a + b.value, b.tangent}; }
inline Dual operator-(const Dual& a, double b) { return {a.value - b, a.tangent}; }
inline Dual operator-(double a, const Dual& b) { return {a - b.value, -b.tangent}; }
inline Dual operator*(const Dual& a, double b) { return {a.value * b, a.tangent * b}; }
inline Dual operator*(double a, const Dual& b) { return {a * b.value, a * b.tangent}; }
inline Dual operator/(const Dual& a, double b) { return {a.value / b, a.tangent / b}; }
inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }
inline Dual& operator-=(Dual& a, const Dual& b) { return a = a - b; }
inline Dual& operator*=(Dual& a, const Dual& b) { return a = a * b; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.value);
  return {e, e * a.tangent};
}
inline Dual sin(const Dual& a) { return {std::sin(a.value), std::cos(a.value) * a.tangent}; }
inline Dual cos(const Dual& a) { return {std::cos(a.value), -std::sin(a.value) * a.tangent}; }
inline Dual tanh(const Dual& a) {
  const double y = std::tanh(a.value);
  return {y, (1.0 - y * y) * a.tangent};
}
inline Dual sqrt(const Dual& a) {
  const double r = std::sqrt(a.value);
  return {r, a.tangent / (2.0 * r)};
}

// ---- Dual2 ------------------------------------------------------------------

namespace detail {
// Chain rule through a scalar function with f, f', f'' at the value.
inline Dual2 lift(const Dual2& a, double f, double df, double d2f) {
  return {f, df * a.first, d2f * a.first * a.first + df * a.second};
}
}  // namespace detail

inline Dual2 operator-(const Dual2& a) { return {-a.value, -a.first, -a.second}; }
inline Dual2 operator+(const Dual2& a, const Dual2& b) {
  return {a.value + b.value, a.first + b.first, a.second + b.second};
}
inline Dual2 operator-(const Dual2& a, const Dual2& b) {
  return {a.value - b.value, a.first - b.first, a.second - b.second};
}
inline Dual2 operator*(const Dual2& a, const Dual2& b) {
  return {a.value * b.value, a.first * b.value + a.value * b.first,
          a.second * b.value + 2.0 * a.first * b.first + a.value * b.second};
}
inline Dual2 operator/(const Dual2& a, const Dual2& b) {
  // From a = q b: a' = q' b + q b', a'' = q'' b + 2 q' b' + q b''.
  const double q = a.value / b.value;
  const double q1 = (a.first - q * b.first) / b.value;
  const double q2 = (a.second - 2.0 * q1 * b.first - q * b.second) / b.value;
  return {q, q1, q2};
}
inline Dual2 operator+(const Dual2& a, double b) { return {a.value + b, a.first, a.second}; }
inline Dual2 operator+(double a, const Dual2& b) { return {a + b.value, b.first, b.second}; }
inline Dual2 operator-(const Dual2& a, double b) { return {a.value - b, a.first, a.second}; }
inline Dual2 operator-(double a, const Dual2& b) { return {a - b.value, -b.first, -b.second}; }
inline Dual2 operator*(const Dual2& a, double b) { return {a.value * b, a.first * b, a.second * b}; }
inline Dual2 operator*(double a, const Dual2& b) { return {a * b.value, a * b.first, a * b.second}; }
inline Dual2 operator/(const Dual2& a, double b) { return {a.value / b, a.first / b, a.second / b}; }
inline Dual2& operator+=(Dual2& a, const Dual2& b) { return a = a + b; }
inline Dual2& operator-=(Dual2& a, const Dual2& b) { return a = a - b; }
inline Dual2& operator*=(Dual2& a, const Dual2& b) { return a = a * b; }

inline Dual2 exp(const Dual2& a) {
  const double e = std::exp(a.value);
  return detail::lift(a, e, e, e);
}
inline Dual2 sin(const Dual2& a) {
  const double s = std::sin(a.value);
  return detail::lift(a, s, std::cos(a.value), -s);
}
inline Dual2 cos(const Dual2& a) {
  const double c = std::cos(a.value);
  return detail::lift(a, c, -std::sin(a.value), -c);
}
inline Dual2 tanh(const Dual2& a) {
  const double y = std::tanh(a.value);
  const double dy = 1.0 - y * y;
  return detail::lift(a, y, dy, -2.0 * y * dy);
}
inline Dual2 sqrt(const Dual2& a) {
  const double r = std::sqrt(a.value);
  const double dr = 0.5 / r;
  return detail::lift(a, r, dr, -0.5 * dr / a.value);
}

}  // namespace flowkl
