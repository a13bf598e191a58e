#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "kstab/polynomial.hpp"
#include "kstab/polytope.hpp"
#include "kstab/quadrature.hpp"
#include "kstab/scalar.hpp"

namespace kstab {

// Closed-form integrals of q(x) * L(x) * ln L(x) with q polynomial and L an
// affine label, over the solid polytope and its facets.  All endpoint algebra
// is exact; logarithms enter only in the final evaluation.  Supported in
// dimensions 1 and 2, which covers every potential-energy computation the
// solvers produce.

namespace detail {

template <class S>
Polynomial<S> antiderivative(const Polynomial<S>& p, int var) {
  Polynomial<S> r(p.nvars());
  for (const auto& [e, c] : p.terms()) {
    Exponents f = e;
    f[static_cast<std::size_t>(var)] += 1;
    r.add_term(f, S(c / scalar_from_long<S>(f[static_cast<std::size_t>(var)])));
  }
  return r;
}

/// sum_k coef_k * s^{k+1} * (ln s / (k+1) - 1/(k+1)^2) evaluated exactly at a
/// rational endpoint; the k-th coefficient belongs to s^k ln s.
template <class S>
double eval_slogs_antiderivative(const Polynomial<S>& r, const S& s) {
  if (s == S(0)) return 0.0;
  if (s < S(0)) throw Error("log integral: negative argument");
  S log_coef(0), plain(0);
  for (const auto& [e, c] : r.terms()) {
    const int k = e[0];
    S kk = scalar_from_long<S>(k + 1);
    S sp(1);
    for (int i = 0; i <= k; ++i) sp *= s;
    log_coef += c * sp / kk;
    plain += c * sp / (kk * kk);
  }
  return to_double(log_coef) * std::log(to_double(s)) - to_double(plain);
}

/// int_a^b q(t) (u t + c) ln(u t + c) dt for a univariate polynomial q.
/// Requires u t + c >= 0 on [a, b].
template <class S>
double llogl_segment(const Polynomial<S>& q, const S& u, const S& c, const S& a, const S& b) {
  if (q.nvars() != 1) throw Error("llogl_segment: univariate integrand expected");
  if (u == S(0)) {
    // Constant L: c ln c times the plain integral.
    if (c == S(0)) return 0.0;
    Polynomial<S> anti = antiderivative(q, 0);
    S plain = anti.eval({b}) - anti.eval({a});
    return to_double(S(c * plain)) * std::log(to_double(c));
  }
  // Substitute s = u t + c; the oriented bounds absorb the sign of u.
  const S sa = u * a + c, sb = u * b + c;
  std::vector<Polynomial<S>> repl{Polynomial<S>(1)};
  repl[0].add_term(Exponents{1, 0, 0, 0}, S(S(1) / u));
  repl[0].add_term(Exponents{0, 0, 0, 0}, S(S(-c) / u));
  Polynomial<S> s_var = Polynomial<S>::variable(1, 0);
  Polynomial<S> r = Polynomial<S>(q.substitute(repl) * s_var);
  double val = eval_slogs_antiderivative(r, sb) - eval_slogs_antiderivative(r, sa);
  return val / to_double(u);
}

inline void extended_gcd(long long a, long long b, long long& x, long long& y) {
  if (b == 0) {
    x = (a >= 0) ? 1 : -1;
    y = 0;
    return;
  }
  long long x1, y1;
  extended_gcd(b, a % b, x1, y1);
  x = y1;
  y = x1 - (a / b) * y1;
}

}  // namespace detail

/// int_P q * L_k ln L_k dx for label k of the polytope.
template <class S>
double integrate_llogl_interior(const Polytope<S>& p, const Polynomial<S>& q, std::size_t k) {
  if (k >= p.labels.size()) throw Error("integrate_llogl_interior: label index out of range");
  if (p.lattice_normals[k].empty())
    throw Error("integrate_llogl_interior: label lacks an integer normal");
  if (q.nvars() != p.dim) throw Error("integrate_llogl_interior: dimension mismatch");
  const auto& ln = p.lattice_normals[k];
  const S c = p.labels[k].offset;

  if (p.dim == 1) {
    if (p.vertices.size() < 2) return 0.0;
    auto [lo, hi] = bounding_box(p);
    return detail::llogl_segment(q, p.labels[k].normal[0], c, lo[0], hi[0]);
  }
  if (p.dim != 2)
    throw Error("integrate_llogl_interior: closed form implemented for dimensions 1 and 2");

  // Unimodular change of variables z1 = L_k(x), z2 = <w, x> with det 1, so
  // Lebesgue measure is preserved and the polygon can be sliced along z1.
  const long long a = ln[0], b = ln[1];
  long long xx, yy;
  detail::extended_gcd(a, b, xx, yy);
  if (a * xx + b * yy != 1) throw Error("integrate_llogl_interior: normal not primitive");

  auto to_z = [&](const Vec<S>& v) {
    return Vec<S>{p.labels[k].eval(v),
                  scalar_from_long<S>(-yy) * v[0] + scalar_from_long<S>(xx) * v[1]};
  };
  // Inverse of the linear part: x1 = xx (z1 - c) - b z2, x2 = yy (z1 - c) + a z2.
  std::vector<Polynomial<S>> inv(2, Polynomial<S>(2));
  {
    Polynomial<S> z1 = Polynomial<S>::variable(2, 0), z2 = Polynomial<S>::variable(2, 1);
    Polynomial<S> z1mc = z1;
    z1mc.add_term(Exponents{}, S(-c));
    inv[0] = scalar_from_long<S>(xx) * z1mc + scalar_from_long<S>(-b) * z2;
    inv[1] = scalar_from_long<S>(yy) * z1mc + scalar_from_long<S>(a) * z2;
  }
  Polynomial<S> qz = q.substitute(inv);
  Polynomial<S> anti = detail::antiderivative(qz, 1);

  // Edges in z coordinates, and the sorted distinct z1 breakpoints.
  struct ZEdge {
    Vec<S> p0, p1;
  };
  std::vector<ZEdge> edges;
  std::vector<S> breaks;
  for (std::size_t j = 0; j < p.labels.size(); ++j) {
    for (const auto& seg : triangulate_facet(p, j)) {
      edges.push_back({to_z(seg[0]), to_z(seg[1])});
    }
  }
  for (const auto& v : p.vertices) breaks.push_back(p.labels[k].eval(v));
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const S t0 = breaks[i], t1 = breaks[i + 1];
    const S tm = (t0 + t1) / scalar_from_long<S>(2);
    // Section bounds at the chamber midpoint pick the two covering edges.
    bool have = false;
    S lo_m(0), hi_m(0);
    Polynomial<S> lo_f(1), hi_f(1);
    for (const auto& e : edges) {
      S s0 = e.p0[0], s1 = e.p1[0];
      if (s0 == s1) continue;
      if (std::min(s0, s1) > t0 || std::max(s0, s1) < t1) continue;
      // w(z1) = w0 + (z1 - s0) * (w1 - w0) / (s1 - s0)
      S slope = (e.p1[1] - e.p0[1]) / (s1 - s0);
      Polynomial<S> wf(1);
      wf.add_term(Exponents{1, 0, 0, 0}, slope);
      wf.add_term(Exponents{}, S(e.p0[1] - slope * s0));
      S wm = wf.eval({tm});
      if (!have) {
        lo_m = hi_m = wm;
        lo_f = hi_f = wf;
        have = true;
      } else if (wm < lo_m) {
        lo_m = wm;
        lo_f = wf;
      } else if (wm > hi_m) {
        hi_m = wm;
        hi_f = wf;
      }
    }
    if (!have) continue;
    // G(z1) = int_{lo}^{hi} qz dz2, a univariate polynomial in z1.
    std::vector<Polynomial<S>> at_hi{Polynomial<S>::variable(1, 0), hi_f};
    std::vector<Polynomial<S>> at_lo{Polynomial<S>::variable(1, 0), lo_f};
    Polynomial<S> g = anti.substitute(at_hi) - anti.substitute(at_lo);
    total += detail::llogl_segment(g, S(1), S(0), t0, t1);
  }
  return total;
}

/// int_{F_j} q * L_k ln L_k dsigma for labels j, k of the polytope.
template <class S>
double integrate_llogl_facet(const Polytope<S>& p, std::size_t j, const Polynomial<S>& q,
                             std::size_t k) {
  if (j >= p.labels.size() || k >= p.labels.size())
    throw Error("integrate_llogl_facet: label index out of range");
  if (q.nvars() != p.dim) throw Error("integrate_llogl_facet: dimension mismatch");
  if (j == k) return 0.0;  // L_k vanishes identically on its own facet
  if (p.dim == 1) {
    for (const auto& pt : triangulate_facet(p, j)) {
      const Vec<S>& v = pt[0];
      S lv = p.labels[k].eval(v);
      if (lv == S(0)) return 0.0;
      return to_double(S(q.eval(v) * lv)) * std::log(to_double(lv));
    }
    return 0.0;
  }
  if (p.dim != 2)
    throw Error("integrate_llogl_facet: closed form implemented for dimensions 1 and 2");

  const auto& u = p.labels[j].normal;
  std::size_t drop = abs_value(u[1]) > abs_value(u[0]) ? 1 : 0;
  const S scale = S(S(1) / abs_value(u[drop]));
  double total = 0.0;
  for (const auto& seg : triangulate_facet(p, j)) {
    // Parametrize x(t) = w0 + t (w1 - w0), t in [0,1]; the boundary measure
    // contributes |projected length| / |u_drop|.
    const Vec<S>&w0 = seg[0], &w1 = seg[1];
    S proj = abs_value(S(w1[1 - drop] - w0[1 - drop]));
    if (proj == S(0)) continue;
    std::vector<Polynomial<S>> param(2, Polynomial<S>(1));
    for (std::size_t i = 0; i < 2; ++i) {
      param[i] = Polynomial<S>::constant(1, w0[i]);
      param[i].add_term(Exponents{1, 0, 0, 0}, S(w1[i] - w0[i]));
    }
    Polynomial<S> qt = q.substitute(param);
    // L_k along the segment is affine in t.
    S l0 = p.labels[k].eval(w0), l1 = p.labels[k].eval(w1);
    total += to_double(S(proj * scale)) *
             detail::llogl_segment(qt, S(l1 - l0), l0, S(0), S(1));
  }
  return total;
}

}  // namespace kstab
