#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kstab/linalg.hpp"
#include "kstab/polynomial.hpp"
#include "kstab/polytope.hpp"
#include "kstab/quadrature.hpp"
#include "kstab/scalar.hpp"

namespace kstab {

/// One fibration factor: lattice direction p, class offset c, complex base
/// dimension d, and constant base scalar curvature.
template <class S>
struct FibrationFactor {
  std::vector<long long> p;
  S c{0};
  int d = 1;
  S scal{0};
};

template <class S>
struct FibrationData {
  std::vector<FibrationFactor<S>> factors;
};

/// Sign convention for the stability functional.  `kConsistent` pairs the
/// boundary term against the interior term so that the functional vanishes on
/// affine functions; `kPaper` keeps the opposite interior sign and is exposed
/// so the incompatibility is testable.
enum class FutakiSign { kConsistent, kPaper };

template <class S>
struct WeightSystem {
  Polynomial<S> v;
  Polynomial<S> w;
  /// v * sum_a scal_a / (<p_a,x> + c_a); polynomial because every d_a >= 1.
  Polynomial<S> base_term;
  /// The affine function solved so the functional vanishes on affine
  /// functions; absent for explicitly supplied (v, w).
  std::optional<AffineFunc<S>> ell_ext;
  FutakiSign sign = FutakiSign::kConsistent;
  /// True when (v, w) came from fibration data rather than raw polynomials.
  bool fibration_weights = false;
};

namespace detail {

template <class S>
Polynomial<S> factor_affine(const Polytope<S>& p, const FibrationFactor<S>& f) {
  if (static_cast<int>(f.p.size()) != p.dim)
    throw Error("fibration factor direction has wrong dimension");
  Vec<S> n(f.p.size());
  for (std::size_t i = 0; i < f.p.size(); ++i) n[i] = scalar_from_long<S>(f.p[i]);
  return Polynomial<S>::affine(AffineFunc<S>(n, f.c));
}

}  // namespace detail

/// v = prod_a (<p_a, x> + c_a)^{d_a}; must be positive on P, which for a
/// product of affine factors reduces to positivity at the vertices.
template <class S>
Polynomial<S> make_v(const Polytope<S>& p, const FibrationData<S>& fib) {
  if (fib.factors.empty()) throw Error("make_v: at least one fibration factor required");
  Polynomial<S> v = Polynomial<S>::constant(p.dim, S(1));
  for (std::size_t a = 0; a < fib.factors.size(); ++a) {
    const auto& f = fib.factors[a];
    if (f.d < 1) throw Error("make_v: factor dimension must be positive");
    Polynomial<S> lin = detail::factor_affine(p, f);
    for (std::size_t vtx = 0; vtx < p.vertices.size(); ++vtx) {
      if (!(lin.eval(p.vertices[vtx]) > S(0))) {
        std::ostringstream os;
        os << "make_v: factor " << a << " is not positive at vertex (";
        for (std::size_t i = 0; i < p.vertices[vtx].size(); ++i)
          os << (i ? ", " : "") << to_double(p.vertices[vtx][i]);
        os << ")";
        throw Error(os.str());
      }
    }
    v = v * lin.pow(f.d);
  }
  return v;
}

/// v * sum_a scal_a / (<p_a,x> + c_a), expanded by cancelling one affine
/// factor per summand.
template <class S>
Polynomial<S> make_base_term(const Polytope<S>& p, const FibrationData<S>& fib) {
  Polynomial<S> total(p.dim);
  for (std::size_t a = 0; a < fib.factors.size(); ++a) {
    if (fib.factors[a].scal == S(0)) continue;
    Polynomial<S> term = Polynomial<S>::constant(p.dim, fib.factors[a].scal);
    for (std::size_t b = 0; b < fib.factors.size(); ++b) {
      Polynomial<S> lin = detail::factor_affine(p, fib.factors[b]);
      term = term * lin.pow(fib.factors[b].d - (a == b ? 1 : 0));
    }
    total += term;
  }
  return total;
}

/// The stability pairing against a polynomial test function:
///   2 int_{dP} f v dsigma -/+ int_P f w dx
/// with the interior sign chosen by the convention flag.
template <class S>
S futaki_polynomial(const Polytope<S>& p, const WeightSystem<S>& ws, const Polynomial<S>& f) {
  S boundary = integrate_boundary(p, Polynomial<S>(f * ws.v));
  S interior = integrate_interior(p, Polynomial<S>(f * ws.w));
  S two = scalar_from_long<S>(2);
  return ws.sign == FutakiSign::kConsistent ? S(two * boundary - interior)
                                            : S(two * boundary + interior);
}

/// Solves the Gram system for the affine function that makes the stability
/// functional vanish on all affine test functions.
template <class S>
AffineFunc<S> solve_extremal_affine(const Polytope<S>& p, const FibrationData<S>& fib,
                                    FutakiSign sign = FutakiSign::kConsistent) {
  Polynomial<S> v = make_v(p, fib);
  Polynomial<S> base = make_base_term(p, fib);
  const std::size_t n = static_cast<std::size_t>(p.dim) + 1;
  std::vector<Polynomial<S>> basis;
  basis.push_back(Polynomial<S>::constant(p.dim, S(1)));
  for (int i = 0; i < p.dim; ++i) basis.push_back(Polynomial<S>::variable(p.dim, i));

  Mat<S> gram(n, n);
  Vec<S> rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      S g = integrate_interior(p, Polynomial<S>(basis[i] * basis[j] * v));
      gram(i, j) = g;
      gram(j, i) = g;
    }
    S boundary = integrate_boundary(p, Polynomial<S>(basis[i] * v));
    S interior = integrate_interior(p, Polynomial<S>(basis[i] * base));
    S two = scalar_from_long<S>(2);
    rhs[i] = sign == FutakiSign::kConsistent ? S(two * boundary + interior)
                                             : S(interior - two * boundary);
  }
  if (!is_positive_definite(gram))
    throw Error("solve_extremal_affine: Gram matrix is not positive definite");
  double cond = condition_estimate(gram);
  if (!(cond < 1e14)) {
    std::ostringstream os;
    os << "solve_extremal_affine: Gram system too ill-conditioned (cond ~ " << cond << ")";
    throw Error(os.str());
  }
  Vec<S> z = solve_square(gram, rhs);
  Vec<S> normal(z.begin() + 1, z.end());
  return AffineFunc<S>(std::move(normal), z[0]);
}

template <class S>
Polynomial<S> make_w(const Polytope<S>& p, const FibrationData<S>& fib,
                     const AffineFunc<S>& ell) {
  Polynomial<S> v = make_v(p, fib);
  return Polynomial<S>(v * Polynomial<S>::affine(ell) - make_base_term(p, fib));
}

/// Full weight system from fibration data.
template <class S>
WeightSystem<S> build_weight_system(const Polytope<S>& p, const FibrationData<S>& fib,
                                    FutakiSign sign = FutakiSign::kConsistent) {
  WeightSystem<S> ws;
  ws.sign = sign;
  ws.v = make_v(p, fib);
  ws.base_term = make_base_term(p, fib);
  ws.ell_ext = solve_extremal_affine(p, fib, sign);
  ws.w = Polynomial<S>(ws.v * Polynomial<S>::affine(*ws.ell_ext) - ws.base_term);
  ws.fibration_weights = true;
  return ws;
}

/// Weight system from explicit polynomials; v is checked for positivity at
/// the vertices and on an interior probe grid.
template <class S>
WeightSystem<S> weight_system_from_polynomials(const Polytope<S>& p, Polynomial<S> v,
                                               Polynomial<S> w,
                                               FutakiSign sign = FutakiSign::kConsistent) {
  if (v.nvars() != p.dim || w.nvars() != p.dim)
    throw Error("weight_system_from_polynomials: dimension mismatch");
  for (const auto& vtx : p.vertices)
    if (!(v.eval(vtx) > S(0)))
      throw Error("weight_system_from_polynomials: v is not positive at a vertex");
  auto [lo, hi] = bounding_box(p);
  const int n = 16;
  std::vector<double> x(static_cast<std::size_t>(p.dim));
  std::vector<int> idx(static_cast<std::size_t>(p.dim), 0);
  while (true) {
    Vec<S> pt(static_cast<std::size_t>(p.dim));
    for (int i = 0; i < p.dim; ++i) {
      S t = S(scalar_from_long<S>(2 * idx[static_cast<std::size_t>(i)] + 1) /
              scalar_from_long<S>(2 * n));
      pt[static_cast<std::size_t>(i)] =
          lo[static_cast<std::size_t>(i)] +
          t * (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]);
    }
    if (contains(p, pt) && !(v.eval(pt) > S(0)))
      throw Error("weight_system_from_polynomials: v is not positive on the interior grid");
    int i = 0;
    for (; i < p.dim; ++i) {
      if (++idx[static_cast<std::size_t>(i)] < n) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
    if (i == p.dim) break;
  }
  WeightSystem<S> ws;
  ws.sign = sign;
  ws.v = std::move(v);
  ws.w = std::move(w);
  ws.base_term = Polynomial<S>(p.dim);
  ws.fibration_weights = false;
  return ws;
}

/// Values of the stability functional on the affine basis {1, x_1, ..}; all
/// must vanish for a normalized weight system.
template <class S>
Vec<S> affine_vanishing_residuals(const Polytope<S>& p, const WeightSystem<S>& ws) {
  Vec<S> res;
  res.push_back(futaki_polynomial(p, ws, Polynomial<S>::constant(p.dim, S(1))));
  for (int i = 0; i < p.dim; ++i)
    res.push_back(futaki_polynomial(p, ws, Polynomial<S>::variable(p.dim, i)));
  return res;
}

template <class S>
double max_affine_residual(const Polytope<S>& p, const WeightSystem<S>& ws) {
  double m = 0;
  for (const S& r : affine_vanishing_residuals(p, ws))
    m = std::max(m, std::fabs(to_double(r)));
  return m;
}

}  // namespace kstab
