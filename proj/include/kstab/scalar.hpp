#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kstab {

/// Exact rational scalar used whenever the input data is rational.
using Rational = boost::multiprecision::cpp_rational;

/// Thrown on contract violations and invalid inputs across the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr bool exact = false;
  static double from_long(long long v) { return static_cast<double>(v); }
  static double to_double(const double& v) { return v; }
  // Feasibility and equality tests in inexact mode use this absolute slack.
  static double feasibility_tol() { return 1e-10; }
};

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static Rational from_long(long long v) { return Rational(v); }
  static double to_double(const Rational& v) { return v.template convert_to<double>(); }
  static Rational feasibility_tol() { return Rational(0); }
};

template <class S>
double to_double(const S& v) {
  return ScalarTraits<S>::to_double(v);
}

template <class S>
S scalar_from_long(long long v) {
  return ScalarTraits<S>::from_long(v);
}

template <class S>
S abs_value(const S& v) {
  return v < S(0) ? S(-v) : v;
}

/// pi, exact types get a fixed 40-digit rational approximation.
template <class S>
S pi_value();

template <>
inline double pi_value<double>() {
  return 3.14159265358979323846;
}

template <>
inline Rational pi_value<Rational>() {
  return Rational(
      "31415926535897932384626433832795028841972/"
      "10000000000000000000000000000000000000000");
}

template <class S>
using Vec = std::vector<S>;

template <class S>
S dot(const Vec<S>& a, const Vec<S>& b) {
  if (a.size() != b.size()) throw Error("dot: size mismatch");
  S acc(0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <class S>
Vec<S> vec_sub(const Vec<S>& a, const Vec<S>& b) {
  Vec<S> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

template <class S>
Vec<S> vec_add(const Vec<S>& a, const Vec<S>& b) {
  Vec<S> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

template <class S>
Vec<S> vec_scale(const S& s, const Vec<S>& a) {
  Vec<S> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

template <class S>
double euclidean_norm(const Vec<S>& a) {
  double acc = 0;
  for (const S& v : a) {
    double d = to_double(v);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace kstab
