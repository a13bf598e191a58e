#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kstab/scalar.hpp"

namespace kstab {

/// Hard cap on the ambient dimension; everything downstream relies on it.
inline constexpr int kMaxVars = 4;

/// Exponent vector of a monomial, zero-padded beyond the active variables.
using Exponents = std::array<int, kMaxVars>;

/// Affine function x -> <normal, x> + offset.
template <class S>
struct AffineFunc {
  Vec<S> normal;
  S offset{0};

  AffineFunc() = default;
  AffineFunc(Vec<S> n, S c) : normal(std::move(n)), offset(std::move(c)) {}

  S eval(const Vec<S>& x) const { return dot(normal, x) + offset; }
  int nvars() const { return static_cast<int>(normal.size()); }
};

/// Sparse multivariate polynomial over the scalar S, at most kMaxVars variables.
/// Terms with exactly zero coefficient are never stored.
template <class S>
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(int nvars) : nvars_(check_nvars(nvars)) {}

  static Polynomial constant(int nvars, const S& c) {
    Polynomial p(nvars);
    p.add_term(Exponents{}, c);
    return p;
  }

  static Polynomial variable(int nvars, int i) {
    Polynomial p(nvars);
    Exponents e{};
    e[static_cast<std::size_t>(i)] = 1;
    p.add_term(e, S(1));
    return p;
  }

  static Polynomial affine(const AffineFunc<S>& a) {
    Polynomial p(a.nvars());
    p.add_term(Exponents{}, a.offset);
    for (int i = 0; i < a.nvars(); ++i) {
      Exponents e{};
      e[static_cast<std::size_t>(i)] = 1;
      p.add_term(e, a.normal[static_cast<std::size_t>(i)]);
    }
    return p;
  }

  int nvars() const { return nvars_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, total(e));
    return d;
  }

  void add_term(const Exponents& e, const S& c) {
    if (c == S(0)) return;
    auto it = terms_.find(e);
    if (it == terms_.end()) {
      terms_.emplace(e, c);
    } else {
      it->second += c;
      if (it->second == S(0)) terms_.erase(it);
    }
  }

  const std::map<Exponents, S>& terms() const { return terms_; }

  Polynomial operator-() const {
    Polynomial r(nvars_);
    for (const auto& [e, c] : terms_) r.terms_.emplace(e, S(-c));
    return r;
  }

  Polynomial& operator+=(const Polynomial& o) {
    require_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& o) {
    require_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, S(-c));
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.require_same(b);
    Polynomial r(a.nvars_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        Exponents e{};
        for (int i = 0; i < kMaxVars; ++i)
          e[static_cast<std::size_t>(i)] =
              ea[static_cast<std::size_t>(i)] + eb[static_cast<std::size_t>(i)];
        r.add_term(e, ca * cb);
      }
    }
    return r;
  }

  friend Polynomial operator*(const S& s, const Polynomial& p) {
    Polynomial r(p.nvars_);
    if (s == S(0)) return r;
    for (const auto& [e, c] : p.terms_) r.terms_.emplace(e, S(s * c));
    return r;
  }

  Polynomial pow(int k) const {
    Polynomial r = constant(nvars_, S(1));
    Polynomial base = *this;
    for (int i = 0; i < k; ++i) r = r * base;
    return r;
  }

  Polynomial partial(int i) const {
    Polynomial r(nvars_);
    for (const auto& [e, c] : terms_) {
      int ei = e[static_cast<std::size_t>(i)];
      if (ei == 0) continue;
      Exponents d = e;
      d[static_cast<std::size_t>(i)] = ei - 1;
      r.add_term(d, S(scalar_from_long<S>(ei) * c));
    }
    return r;
  }

  S eval(const Vec<S>& x) const {
    if (static_cast<int>(x.size()) != nvars_) throw Error("Polynomial::eval: dimension mismatch");
    // Power tables keep repeated exponent work out of the inner loop.
    std::array<std::vector<S>, kMaxVars> pows;
    for (int i = 0; i < nvars_; ++i) {
      int dmax = 0;
      for (const auto& [e, c] : terms_) dmax = std::max(dmax, e[static_cast<std::size_t>(i)]);
      auto& tab = pows[static_cast<std::size_t>(i)];
      tab.resize(static_cast<std::size_t>(dmax) + 1, S(1));
      for (int k = 1; k <= dmax; ++k)
        tab[static_cast<std::size_t>(k)] =
            tab[static_cast<std::size_t>(k - 1)] * x[static_cast<std::size_t>(i)];
    }
    S acc(0);
    for (const auto& [e, c] : terms_) {
      S t = c;
      for (int i = 0; i < nvars_; ++i) {
        int ei = e[static_cast<std::size_t>(i)];
        if (ei > 0) t *= pows[static_cast<std::size_t>(i)][static_cast<std::size_t>(ei)];
      }
      acc += t;
    }
    return acc;
  }

  double eval_double(const std::vector<double>& x) const {
    double acc = 0;
    for (const auto& [e, c] : terms_) {
      double t = to_double(c);
      for (int i = 0; i < nvars_; ++i) {
        int ei = e[static_cast<std::size_t>(i)];
        for (int k = 0; k < ei; ++k) t *= x[static_cast<std::size_t>(i)];
      }
      acc += t;
    }
    return acc;
  }

  /// Substitutes repl[i] for variable i.  All repl share a variable count,
  /// which becomes the variable count of the result.
  Polynomial substitute(const std::vector<Polynomial>& repl) const {
    if (static_cast<int>(repl.size()) != nvars_)
      throw Error("Polynomial::substitute: wrong replacement count");
    int out_vars = repl.empty() ? 0 : repl[0].nvars_;
    for (const auto& r : repl)
      if (r.nvars_ != out_vars) throw Error("Polynomial::substitute: mixed variable counts");
    // Memoized powers of each replacement.
    std::vector<std::vector<Polynomial>> pows(repl.size());
    for (std::size_t i = 0; i < repl.size(); ++i)
      pows[i].push_back(constant(out_vars, S(1)));
    Polynomial acc(out_vars);
    for (const auto& [e, c] : terms_) {
      Polynomial term = constant(out_vars, c);
      for (int i = 0; i < nvars_; ++i) {
        int ei = e[static_cast<std::size_t>(i)];
        auto& tab = pows[static_cast<std::size_t>(i)];
        while (static_cast<int>(tab.size()) <= ei)
          tab.push_back(tab.back() * repl[static_cast<std::size_t>(i)]);
        if (ei > 0) term = term * tab[static_cast<std::size_t>(ei)];
      }
      acc += term;
    }
    return acc;
  }

  /// Exact division: returns quotient when divisor divides this exactly.
  /// Uses graded-lex single-divisor long division; the remainder must vanish.
  bool divide_exact(const Polynomial& divisor, Polynomial& quotient) const {
    require_same(divisor);
    if (divisor.is_zero()) throw Error("Polynomial::divide_exact: division by zero");
    Polynomial rem = *this;
    Polynomial q(nvars_);
    auto lead = [](const Polynomial& p) {
      auto best = p.terms_.begin();
      for (auto it = p.terms_.begin(); it != p.terms_.end(); ++it) {
        if (grlex_less(best->first, it->first)) best = it;
      }
      return best;
    };
    auto dl = lead(divisor);
    while (!rem.is_zero()) {
      auto rl = lead(rem);
      Exponents diff{};
      bool divisible = true;
      for (int i = 0; i < kMaxVars; ++i) {
        diff[static_cast<std::size_t>(i)] = rl->first[static_cast<std::size_t>(i)] -
                                            dl->first[static_cast<std::size_t>(i)];
        if (diff[static_cast<std::size_t>(i)] < 0) divisible = false;
      }
      if (!divisible) return false;
      S coef = rl->second / dl->second;
      Polynomial mono(nvars_);
      mono.add_term(diff, coef);
      q += mono;
      rem -= mono * divisor;
    }
    quotient = q;
    return true;
  }

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [e, c] : terms_) {
      if (!first) os << " + ";
      first = false;
      os << c;
      for (int i = 0; i < nvars_; ++i) {
        int ei = e[static_cast<std::size_t>(i)];
        if (ei > 0) {
          os << "*x" << i;
          if (ei > 1) os << "^" << ei;
        }
      }
    }
    return os.str();
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.nvars_ == b.nvars_ && a.terms_ == b.terms_;
  }

 private:
  static int check_nvars(int n) {
    if (n < 0 || n > kMaxVars) throw Error("Polynomial: variable count out of range");
    return n;
  }
  static int total(const Exponents& e) {
    int t = 0;
    for (int v : e) t += v;
    return t;
  }
  static bool grlex_less(const Exponents& a, const Exponents& b) {
    int ta = total(a), tb = total(b);
    if (ta != tb) return ta < tb;
    return a < b;
  }
  void require_same(const Polynomial& o) const {
    if (nvars_ != o.nvars_) throw Error("Polynomial: mixed variable counts");
  }

  int nvars_ = 0;
  std::map<Exponents, S> terms_;
};

}  // namespace kstab
