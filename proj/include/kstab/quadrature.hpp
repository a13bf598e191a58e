#pragma once

#include <cstddef>
#include <vector>

#include "kstab/polynomial.hpp"
#include "kstab/polytope.hpp"
#include "kstab/scalar.hpp"

namespace kstab {

namespace detail {

template <class S>
S factorial_s(int n) {
  S r(1);
  for (int i = 2; i <= n; ++i) r *= scalar_from_long<S>(i);
  return r;
}

/// Integral of t^beta over the standard k-simplex: prod(beta_i!) / (k+|beta|)!.
template <class S>
S std_simplex_monomial(int k, const Exponents& beta) {
  S num(1);
  int total = 0;
  for (int i = 0; i < k; ++i) {
    num *= factorial_s<S>(beta[static_cast<std::size_t>(i)]);
    total += beta[static_cast<std::size_t>(i)];
  }
  return S(num / factorial_s<S>(k + total));
}

/// Integrates f over the k-simplex spanned by pts (k+1 ambient points) with
/// respect to `measure_factor` times the parameter-space Lebesgue measure:
/// substitute x = v0 + sum_j t_j (v_j - v0) and apply the monomial formula.
template <class S>
S integrate_parametrized_simplex(const Polynomial<S>& f, const std::vector<Vec<S>>& pts,
                                 const S& measure_factor) {
  if (measure_factor == S(0)) return S(0);
  const int k = static_cast<int>(pts.size()) - 1;
  if (k == 0) return S(measure_factor * f.eval(pts[0]));
  const int n = f.nvars();
  std::vector<Polynomial<S>> repl;
  repl.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Polynomial<S> xi = Polynomial<S>::constant(k, pts[0][static_cast<std::size_t>(i)]);
    for (int j = 1; j <= k; ++j) {
      S d = pts[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] -
            pts[0][static_cast<std::size_t>(i)];
      if (d != S(0)) xi += d * Polynomial<S>::variable(k, j - 1);
    }
    repl.push_back(std::move(xi));
  }
  Polynomial<S> g = f.substitute(repl);
  S acc(0);
  for (const auto& [e, c] : g.terms()) acc += c * std_simplex_monomial<S>(k, e);
  return S(measure_factor * acc);
}

}  // namespace detail

/// Exact integral of a polynomial over the solid polytope.
template <class S>
S integrate_interior(const Polytope<S>& p, const Polynomial<S>& f) {
  if (f.nvars() != p.dim) throw Error("integrate_interior: dimension mismatch");
  S acc(0);
  for (const auto& s : triangulate(p))
    acc += detail::integrate_parametrized_simplex(f, s, abs_value(simplex_det(s)));
  return acc;
}

template <class S>
S volume(const Polytope<S>& p) {
  return integrate_interior(p, Polynomial<S>::constant(p.dim, S(1)));
}

/// Exact integral of a polynomial over facet j with respect to the boundary
/// measure induced by the label: d(L_j) wedge dsigma = -dx, realized as the
/// Lebesgue measure of the facet projected along a coordinate axis i* with
/// u_{j,i*} != 0, scaled by 1/|u_{j,i*}|.
template <class S>
S integrate_facet(const Polytope<S>& p, std::size_t j, const Polynomial<S>& f) {
  if (f.nvars() != p.dim) throw Error("integrate_facet: dimension mismatch");
  const auto& u = p.labels[j].normal;
  std::size_t drop = 0;
  for (std::size_t i = 1; i < u.size(); ++i)
    if (abs_value(u[i]) > abs_value(u[drop])) drop = i;
  if (u[drop] == S(0)) throw Error("integrate_facet: zero label normal");
  const S scale = S(S(1) / abs_value(u[drop]));
  S acc(0);
  for (const auto& s : triangulate_facet(p, j)) {
    // Determinant of the simplex after dropping coordinate `drop`.
    const std::size_t k = s.size() - 1;
    S det(1);
    if (k > 0) {
      Mat<S> m(k, k);
      for (std::size_t r = 0; r < k; ++r) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
          if (i == drop) continue;
          m(r, col++) = s[r + 1][i] - s[0][i];
        }
      }
      det = determinant(std::move(m));
    }
    acc += detail::integrate_parametrized_simplex(f, s, S(abs_value(det) * scale));
  }
  return acc;
}

/// Integral over the whole boundary with respect to the facet measures.
template <class S>
S integrate_boundary(const Polytope<S>& p, const Polynomial<S>& f) {
  S acc(0);
  for (std::size_t j = 0; j < p.labels.size(); ++j) acc += integrate_facet(p, j, f);
  return acc;
}

/// Exact integral of max(0, <h,x> - c) * g over the solid polytope: clip to
/// the halfspace where the hinge is active and integrate the affine part.
template <class S>
S integrate_crease(const Polytope<S>& p, const Vec<S>& h, const S& c, const Polynomial<S>& g) {
  Polytope<S> region = clip(p, h, c);
  Polynomial<S> lin = Polynomial<S>::affine(AffineFunc<S>(h, S(-c)));
  return integrate_interior(region, Polynomial<S>(lin * g));
}

}  // namespace kstab
