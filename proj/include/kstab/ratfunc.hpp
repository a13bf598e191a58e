#pragma once

#include <utility>

#include "kstab/polynomial.hpp"
#include "kstab/scalar.hpp"

namespace kstab {

/// Quotient of two polynomials.  No gcd reduction is attempted beyond one
/// exact-division try, which keeps the common adjugate-over-determinant
/// shapes small without a full factorization.
template <class S>
class RationalFunc {
 public:
  explicit RationalFunc(int nvars)
      : num_(nvars), den_(Polynomial<S>::constant(nvars, S(1))) {}

  RationalFunc(Polynomial<S> num, Polynomial<S> den)
      : num_(std::move(num)), den_(std::move(den)) {
    if (den_.is_zero()) throw Error("RationalFunc: zero denominator");
    reduce();
  }

  static RationalFunc from(Polynomial<S> p) {
    int n = p.nvars();
    return RationalFunc(std::move(p), Polynomial<S>::constant(n, S(1)));
  }

  const Polynomial<S>& num() const { return num_; }
  const Polynomial<S>& den() const { return den_; }
  int nvars() const { return num_.nvars(); }
  bool is_zero() const { return num_.is_zero(); }

  RationalFunc operator+(const RationalFunc& o) const {
    if (den_ == o.den_) return RationalFunc(Polynomial<S>(num_ + o.num_), den_);
    return RationalFunc(Polynomial<S>(num_ * o.den_ + o.num_ * den_),
                        Polynomial<S>(den_ * o.den_));
  }
  RationalFunc operator-(const RationalFunc& o) const {
    if (den_ == o.den_) return RationalFunc(Polynomial<S>(num_ - o.num_), den_);
    return RationalFunc(Polynomial<S>(num_ * o.den_ - o.num_ * den_),
                        Polynomial<S>(den_ * o.den_));
  }
  RationalFunc operator*(const RationalFunc& o) const {
    return RationalFunc(Polynomial<S>(num_ * o.num_), Polynomial<S>(den_ * o.den_));
  }
  RationalFunc operator/(const RationalFunc& o) const {
    if (o.num_.is_zero()) throw Error("RationalFunc: division by zero");
    return RationalFunc(Polynomial<S>(num_ * o.den_), Polynomial<S>(den_ * o.num_));
  }
  RationalFunc operator-() const {
    return RationalFunc(Polynomial<S>(scalar_from_long<S>(-1) * num_), den_);
  }

  /// Quotient rule; the result keeps den^2.
  RationalFunc partial(int var) const {
    Polynomial<S> dn = num_.partial(var), dd = den_.partial(var);
    return RationalFunc(Polynomial<S>(dn * den_ - num_ * dd), Polynomial<S>(den_ * den_));
  }

  S eval(const Vec<S>& x) const {
    S d = den_.eval(x);
    if (d == S(0)) throw Error("RationalFunc: pole at evaluation point");
    return S(num_.eval(x) / d);
  }

  double eval_double(const std::vector<double>& x) const {
    return num_.eval_double(x) / den_.eval_double(x);
  }

  /// Equality as functions, by cross multiplication.
  bool operator==(const RationalFunc& o) const {
    return Polynomial<S>(num_ * o.den_) == Polynomial<S>(o.num_ * den_);
  }

 private:
  void reduce() {
    if (num_.is_zero()) {
      den_ = Polynomial<S>::constant(num_.nvars(), S(1));
      return;
    }
    Polynomial<S> q(num_.nvars());
    if (num_.divide_exact(den_, q)) {
      num_ = std::move(q);
      den_ = Polynomial<S>::constant(num_.nvars(), S(1));
    }
  }

  Polynomial<S> num_, den_;
};

}  // namespace kstab
