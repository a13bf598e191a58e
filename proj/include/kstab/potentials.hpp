#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "kstab/linalg.hpp"
#include "kstab/logintegrals.hpp"
#include "kstab/polytope.hpp"
#include "kstab/quadrature.hpp"
#include "kstab/ratfunc.hpp"
#include "kstab/scalar.hpp"
#include "kstab/stability.hpp"
#include "kstab/weights.hpp"

namespace kstab {

enum class PotentialKind { kGuillemin, kPoly, kGrid };

/// Sampled correction values on a uniform 1D grid, interpolated with a
/// Catmull-Rom cubic (clamped at the ends).
struct GridCorrection {
  double lo = 0, hi = 0;
  std::vector<double> values;

  double spacing() const { return (hi - lo) / static_cast<double>(values.size() - 1); }

  double eval(double x) const {
    if (values.size() < 2) return values.empty() ? 0.0 : values[0];
    const long n = static_cast<long>(values.size());
    double s = (x - lo) / spacing();
    long i = static_cast<long>(std::floor(s));
    i = std::max(0L, std::min(i, n - 2));
    double t = s - static_cast<double>(i);
    auto at = [&](long k) { return values[static_cast<std::size_t>(std::max(0L, std::min(k, n - 1)))]; };
    double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    return 0.5 * (2 * p1 + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t * t +
                  (-p0 + 3 * p1 - 3 * p2 + p3) * t * t * t);
  }
};

/// u = u0 + correction with u0 = (1/2) sum_j L_j ln L_j.
template <class S>
struct SymplecticPotential {
  PotentialKind kind = PotentialKind::kGuillemin;
  Polytope<S> domain;
  Polynomial<S> correction;
  GridCorrection grid;
};

template <class S>
SymplecticPotential<S> guillemin_potential(const Polytope<S>& p) {
  SymplecticPotential<S> u;
  u.kind = PotentialKind::kGuillemin;
  u.domain = p;
  u.correction = Polynomial<S>(p.dim);
  return u;
}

template <class S>
SymplecticPotential<S> poly_potential(const Polytope<S>& p, Polynomial<S> correction) {
  if (correction.nvars() != p.dim) throw Error("poly_potential: dimension mismatch");
  SymplecticPotential<S> u;
  u.kind = PotentialKind::kPoly;
  u.domain = p;
  u.correction = std::move(correction);
  return u;
}

/// (1/2) sum_j L_j ln L_j at a strictly interior point (0 on a facet).
template <class S>
double u0_value(const Polytope<S>& p, const std::vector<double>& x) {
  double total = 0;
  for (const auto& label : p.labels) {
    double l = to_double(label.offset);
    for (std::size_t i = 0; i < label.normal.size(); ++i) l += to_double(label.normal[i]) * x[i];
    if (l < 0) throw Error("u0_value: point outside the polytope");
    if (l > 0) total += 0.5 * l * std::log(l);
  }
  return total;
}

template <class S>
double potential_value(const SymplecticPotential<S>& u, const std::vector<double>& x) {
  double base = u0_value(u.domain, x);
  switch (u.kind) {
    case PotentialKind::kGuillemin:
      return base;
    case PotentialKind::kPoly:
      return base + u.correction.eval_double(x);
    case PotentialKind::kGrid:
      return base + u.grid.eval(x[0]);
  }
  return base;
}

/// Exact Hessian (1/2) sum u_j u_j^T / L_j + Hess(correction) at a rational
/// interior point; grid corrections have no exact Hessian.
template <class S>
Mat<S> hessian_exact(const SymplecticPotential<S>& u, const Vec<S>& x) {
  if (u.kind == PotentialKind::kGrid)
    throw Error("hessian_exact: grid corrections evaluate by finite differences");
  const auto& p = u.domain;
  const std::size_t d = static_cast<std::size_t>(p.dim);
  Mat<S> g(d, d);
  for (const auto& label : p.labels) {
    S l = label.eval(x);
    if (l == S(0)) throw Error("hessian_exact: point lies on a facet");
    S inv = S(S(1) / (scalar_from_long<S>(2) * l));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g(i, j) += S(label.normal[i] * label.normal[j] * inv);
  }
  if (u.kind == PotentialKind::kPoly) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        g(i, j) += u.correction.partial(static_cast<int>(i)).partial(static_cast<int>(j)).eval(x);
  }
  return g;
}

template <class S>
Mat<S> inverse_hessian_exact(const SymplecticPotential<S>& u, const Vec<S>& x) {
  Mat<S> g = hessian_exact(u, x);
  if (!is_positive_definite(g)) {
    Mat<double> gd(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gd(i, j) = to_double(g(i, j));
    auto eig = symmetric_eigenvalues(gd);
    std::ostringstream os;
    os << "inverse_hessian: Hessian not positive definite at (";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << to_double(x[i]);
    os << "), smallest eigenvalue " << eig.front();
    throw Error(os.str());
  }
  const std::size_t d = g.rows();
  Mat<S> inv(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    Vec<S> e(d, S(0));
    e[c] = S(1);
    Vec<S> col = solve_square(g, e);
    for (std::size_t r = 0; r < d; ++r) inv(r, c) = col[r];
  }
  return inv;
}

/// Default FD step: bounding-box diameter over 256 (1D) or 128 (2D and up).
template <class S>
double default_fd_step(const Polytope<S>& p) {
  auto [lo, hi] = bounding_box(p);
  double diam = 0;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    double side = to_double(S(hi[i] - lo[i]));
    diam += side * side;
  }
  diam = std::sqrt(diam);
  return diam / (p.dim == 1 ? 256.0 : 128.0);
}

/// Central-difference Hessian of the potential values.
template <class S>
Mat<double> hessian_fd(const SymplecticPotential<S>& u, const std::vector<double>& x, double h) {
  const std::size_t d = x.size();
  auto shifted = [&](std::size_t i, double di, std::size_t j, double dj) {
    std::vector<double> y = x;
    y[i] += di;
    if (j < d) y[j] += dj;
    return potential_value(u, y);
  };
  Mat<double> g(d, d);
  double center = potential_value(u, x);
  for (std::size_t i = 0; i < d; ++i) {
    g(i, i) = (shifted(i, h, d, 0) - 2 * center + shifted(i, -h, d, 0)) / (h * h);
    for (std::size_t j = i + 1; j < d; ++j) {
      double v = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) +
                  shifted(i, -h, j, -h)) /
                 (4 * h * h);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

inline Mat<double> invert_small(const Mat<double>& g) {
  const std::size_t d = g.rows();
  Mat<double> inv(d, d);
  if (d == 1) {
    inv(0, 0) = 1.0 / g(0, 0);
    return inv;
  }
  if (d == 2) {
    double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
    inv(0, 0) = g(1, 1) / det;
    inv(1, 1) = g(0, 0) / det;
    inv(0, 1) = -g(0, 1) / det;
    inv(1, 0) = -g(1, 0) / det;
    return inv;
  }
  throw Error("invert_small: dimensions above 2 unsupported");
}

template <class S>
Mat<double> inverse_hessian_fd(const SymplecticPotential<S>& u, const std::vector<double>& x,
                               double h) {
  return invert_small(hessian_fd(u, x, h));
}

enum class MatrixRole { kInverseHessian, kPhi };

/// Symmetric matrix of polynomial entries; only the upper triangle is stored.
template <class S>
struct MatrixField {
  MatrixRole role = MatrixRole::kInverseHessian;
  int dim = 0;
  std::vector<Polynomial<S>> upper;

  MatrixField() = default;
  MatrixField(MatrixRole r, int d, int nvars)
      : role(r), dim(d), upper(static_cast<std::size_t>(d * (d + 1) / 2), Polynomial<S>(nvars)) {}

  std::size_t index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i * dim - i * (i - 1) / 2 + (j - i));
  }
  const Polynomial<S>& at(int i, int j) const { return upper[index(i, j)]; }
  Polynomial<S>& at(int i, int j) { return upper[index(i, j)]; }

  Mat<S> eval(const Vec<S>& x) const {
    Mat<S> m(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = at(i, j).eval(x);
    return m;
  }
};

namespace detail {

template <class S>
Polynomial<S> poly_determinant(const std::vector<std::vector<Polynomial<S>>>& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  Polynomial<S> det(m[0][0].nvars());
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::vector<Polynomial<S>>> minor;
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<Polynomial<S>> row;
      for (std::size_t k = 0; k < n; ++k)
        if (k != c) row.push_back(m[r][k]);
      minor.push_back(std::move(row));
    }
    Polynomial<S> term = Polynomial<S>(m[0][c] * poly_determinant(minor));
    if (c % 2 == 0)
      det += term;
    else
      det -= term;
  }
  return det;
}

template <class S>
std::vector<std::vector<Polynomial<S>>> poly_adjugate(
    const std::vector<std::vector<Polynomial<S>>>& m) {
  const std::size_t n = m.size();
  std::vector<std::vector<Polynomial<S>>> adj(
      n, std::vector<Polynomial<S>>(n, Polynomial<S>(m[0][0].nvars())));
  if (n == 1) {
    adj[0][0] = Polynomial<S>::constant(m[0][0].nvars(), S(1));
    return adj;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<std::vector<Polynomial<S>>> minor;
      for (std::size_t r = 0; r < n; ++r) {
        if (r == i) continue;
        std::vector<Polynomial<S>> row;
        for (std::size_t c = 0; c < n; ++c)
          if (c != j) row.push_back(m[r][c]);
        minor.push_back(std::move(row));
      }
      Polynomial<S> cof = poly_determinant(minor);
      if ((i + j) % 2 == 1) cof = Polynomial<S>(scalar_from_long<S>(-1) * cof);
      adj[j][i] = std::move(cof);  // transpose of the cofactor matrix
    }
  }
  return adj;
}

}  // namespace detail

/// Polynomial inverse Hessian of the Guillemin potential, when it exists.
/// Hess u0 = N / (2 prod L), so the candidate is 2 (prod L) adj(N) / det(N);
/// exact divisibility of every entry decides.
template <class S>
std::optional<MatrixField<S>> guillemin_h0(const Polytope<S>& p) {
  const std::size_t d = static_cast<std::size_t>(p.dim);
  std::vector<Polynomial<S>> ells;
  for (const auto& label : p.labels) ells.push_back(Polynomial<S>::affine(label));

  std::vector<std::vector<Polynomial<S>>> n_mat(
      d, std::vector<Polynomial<S>>(d, Polynomial<S>(p.dim)));
  for (std::size_t f = 0; f < p.labels.size(); ++f) {
    Polynomial<S> rest = Polynomial<S>::constant(p.dim, S(1));
    for (std::size_t k = 0; k < ells.size(); ++k)
      if (k != f) rest = rest * ells[k];
    const auto& nrm = p.labels[f].normal;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        n_mat[i][j] += Polynomial<S>(Polynomial<S>::constant(p.dim, S(nrm[i] * nrm[j])) * rest);
  }
  Polynomial<S> det = detail::poly_determinant(n_mat);
  auto adj = detail::poly_adjugate(n_mat);
  Polynomial<S> prod = Polynomial<S>::constant(p.dim, scalar_from_long<S>(2));
  for (const auto& l : ells) prod = prod * l;

  MatrixField<S> h0(MatrixRole::kInverseHessian, p.dim, p.dim);
  for (int i = 0; i < p.dim; ++i) {
    for (int j = i; j < p.dim; ++j) {
      Polynomial<S> cand = Polynomial<S>(prod * adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      Polynomial<S> q(p.dim);
      if (!cand.divide_exact(det, q)) return std::nullopt;
      h0.at(i, j) = std::move(q);
    }
  }
  return h0;
}

struct FacetConditionReport {
  double contraction_residual = 0;  // max coefficient of H u_j after restriction to F_j
  double derivative_residual = 0;   // same for grad(H(u_j,u_j)) - 2 (v) u_j
  double min_transverse = std::numeric_limits<double>::infinity();
};

struct BoundaryReport {
  std::vector<FacetConditionReport> facets;
  double max_contraction = 0;
  double max_derivative = 0;
  double min_transverse = std::numeric_limits<double>::infinity();
  bool pass(double tol) const {
    return max_contraction <= tol && max_derivative <= tol &&
           (!std::isfinite(min_transverse) || min_transverse > 0);
  }
};

namespace detail {

inline Exponents unit_exponent(int var) {
  Exponents e{};
  e[static_cast<std::size_t>(var)] = 1;
  return e;
}

/// Substitutes the facet relation into q: the variable with the largest
/// normal component is eliminated via L_j = 0.  The result vanishes
/// identically iff q vanishes on the facet hyperplane.
template <class S>
Polynomial<S> restrict_to_facet(const Polytope<S>& p, std::size_t j, const Polynomial<S>& q) {
  const auto& label = p.labels[j];
  std::size_t pivot = 0;
  for (std::size_t i = 1; i < label.normal.size(); ++i)
    if (abs_value(label.normal[i]) > abs_value(label.normal[pivot])) pivot = i;
  std::vector<Polynomial<S>> repl;
  for (std::size_t i = 0; i < label.normal.size(); ++i) {
    if (i != pivot) {
      repl.push_back(Polynomial<S>::variable(p.dim, static_cast<int>(i)));
      continue;
    }
    Polynomial<S> expr = Polynomial<S>::constant(p.dim, S(-label.offset / label.normal[pivot]));
    for (std::size_t k = 0; k < label.normal.size(); ++k) {
      if (k == pivot) continue;
      expr.add_term(unit_exponent(static_cast<int>(k)), S(-label.normal[k] / label.normal[pivot]));
    }
    repl.push_back(std::move(expr));
  }
  return q.substitute(repl);
}

template <class S>
double max_abs_coeff(const Polynomial<S>& q) {
  double m = 0;
  for (const auto& [e, c] : q.terms()) m = std::max(m, std::fabs(to_double(c)));
  return m;
}

/// Sample points on facet j: the segment/point decomposition evaluated at
/// interior parameters.
template <class S>
std::vector<Vec<S>> facet_samples(const Polytope<S>& p, std::size_t j) {
  std::vector<Vec<S>> out;
  for (const auto& piece : triangulate_facet(p, j)) {
    if (piece.size() == 1) {
      out.push_back(piece[0]);
      continue;
    }
    for (int k = 1; k <= 3; ++k) {
      S t(k, 4);
      Vec<S> pt(piece[0].size());
      for (std::size_t i = 0; i < pt.size(); ++i)
        pt[i] = S(piece[0][i] + t * (piece[1][i] - piece[0][i]));
      out.push_back(std::move(pt));
    }
  }
  return out;
}

}  // namespace detail

/// Checks the facet conditions for a polynomial matrix field: (i) the
/// contraction with the facet normal vanishes on the facet, (ii) the gradient
/// of the doubly contracted field restricts to twice the normal (twice v
/// times the normal for a Phi-role field), (iii) the field stays positive on
/// directions transverse to the normal at facet samples.
template <class S>
BoundaryReport check_boundary_conditions(const Polytope<S>& p, const MatrixField<S>& field,
                                            const Polynomial<S>& v) {
  if (field.dim != p.dim) throw Error("check_boundary_conditions: dimension mismatch");
  BoundaryReport report;
  Polynomial<S> weight =
      field.role == MatrixRole::kPhi ? v : Polynomial<S>::constant(p.dim, S(1));

  for (std::size_t j = 0; j < p.labels.size(); ++j) {
    FacetConditionReport fr;
    const auto& nrm = p.labels[j].normal;

    for (int i = 0; i < p.dim; ++i) {
      Polynomial<S> comp(p.dim);
      for (int k = 0; k < p.dim; ++k)
        comp += Polynomial<S>(Polynomial<S>::constant(p.dim, nrm[static_cast<std::size_t>(k)]) *
                              field.at(i, k));
      fr.contraction_residual = std::max(
          fr.contraction_residual, detail::max_abs_coeff(detail::restrict_to_facet(p, j, comp)));
    }

    Polynomial<S> contracted(p.dim);
    for (int i = 0; i < p.dim; ++i)
      for (int k = 0; k < p.dim; ++k)
        contracted += Polynomial<S>(
            Polynomial<S>::constant(p.dim, S(nrm[static_cast<std::size_t>(i)] *
                                             nrm[static_cast<std::size_t>(k)])) *
            field.at(i, k));
    for (int m = 0; m < p.dim; ++m) {
      Polynomial<S> cond = contracted.partial(m);
      cond -= Polynomial<S>(Polynomial<S>::constant(
                                p.dim, S(scalar_from_long<S>(2) * nrm[static_cast<std::size_t>(m)])) *
                            weight);
      fr.derivative_residual = std::max(
          fr.derivative_residual, detail::max_abs_coeff(detail::restrict_to_facet(p, j, cond)));
    }

    if (p.dim == 2) {
      Vec<S> xi{S(-nrm[1]), S(nrm[0])};
      for (const auto& y : detail::facet_samples(p, j)) {
        S q(0);
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            q += S(xi[static_cast<std::size_t>(a)] * xi[static_cast<std::size_t>(b)] *
                   field.at(a, b).eval(y));
        fr.min_transverse = std::min(fr.min_transverse, to_double(q));
      }
    }

    report.max_contraction = std::max(report.max_contraction, fr.contraction_residual);
    report.max_derivative = std::max(report.max_derivative, fr.derivative_residual);
    report.min_transverse = std::min(report.min_transverse, fr.min_transverse);
    report.facets.push_back(std::move(fr));
  }
  return report;
}

template <class S>
BoundaryReport check_boundary_conditions(const Polytope<S>& p, const MatrixField<S>& field) {
  return check_boundary_conditions(p, field, Polynomial<S>::constant(p.dim, S(1)));
}

/// Numeric facet check for potentials whose inverse Hessian is only available
/// by finite differences: values at inward-shifted samples are linearly
/// extrapolated to the facet.
template <class S>
BoundaryReport check_boundary_conditions(const Polytope<S>& p,
                                            const SymplecticPotential<S>& u, double h) {
  BoundaryReport report;
  const std::size_t d = static_cast<std::size_t>(p.dim);
  for (std::size_t j = 0; j < p.labels.size(); ++j) {
    FacetConditionReport fr;
    std::vector<double> nrm(d), unit(d);
    double norm2 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      nrm[i] = to_double(p.labels[j].normal[i]);
      norm2 += nrm[i] * nrm[i];
    }
    for (std::size_t i = 0; i < d; ++i) unit[i] = nrm[i] / std::sqrt(norm2);
    // Quadratic extrapolation from three inward offsets; the inner FD step is
    // halved so its stencil stays clear of the facet.
    const double t0 = 4 * h;
    const double h_in = h / 2;

    for (const auto& ys : detail::facet_samples(p, j)) {
      std::vector<double> y(d);
      for (std::size_t i = 0; i < d; ++i) y[i] = to_double(ys[i]);
      auto h_at = [&](double t) {
        std::vector<double> x = y;
        for (std::size_t i = 0; i < d; ++i) x[i] += t * unit[i];
        return inverse_hessian_fd(u, x, h_in);
      };
      Mat<double> h1 = h_at(t0), h2 = h_at(2 * t0), h3 = h_at(3 * t0);
      Mat<double> limit(d, d);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
          limit(a, b) = 3 * h1(a, b) - 3 * h2(a, b) + h3(a, b);

      for (std::size_t a = 0; a < d; ++a) {
        double comp = 0;
        for (std::size_t b = 0; b < d; ++b) comp += limit(a, b) * nrm[b];
        fr.contraction_residual = std::max(fr.contraction_residual, std::fabs(comp));
      }

      // grad of H(u_j, u_j) by central differences at the two shifted points,
      // extrapolated to the facet.
      for (std::size_t m = 0; m < d; ++m) {
        auto q_at = [&](double t, double dm) {
          std::vector<double> x = y;
          for (std::size_t i = 0; i < d; ++i) x[i] += t * unit[i];
          x[m] += dm;
          Mat<double> hm = inverse_hessian_fd(u, x, h_in);
          double q = 0;
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) q += hm(a, b) * nrm[a] * nrm[b];
          return q;
        };
        auto dq = [&](double t) { return (q_at(t, h_in) - q_at(t, -h_in)) / (2 * h_in); };
        double grad_m = 3 * dq(t0) - 3 * dq(2 * t0) + dq(3 * t0);
        fr.derivative_residual = std::max(fr.derivative_residual, std::fabs(grad_m - 2 * nrm[m]));
      }

      if (d == 2) {
        double xi0 = -nrm[1], xi1 = nrm[0];
        double q = xi0 * xi0 * limit(0, 0) + 2 * xi0 * xi1 * limit(0, 1) + xi1 * xi1 * limit(1, 1);
        fr.min_transverse = std::min(fr.min_transverse, q);
      }
    }
    report.max_contraction = std::max(report.max_contraction, fr.contraction_residual);
    report.max_derivative = std::max(report.max_derivative, fr.derivative_residual);
    report.min_transverse = std::min(report.min_transverse, fr.min_transverse);
    report.facets.push_back(std::move(fr));
  }
  return report;
}

/// Symbolic v-scalar curvature -sum (v H_ij)_{,ij} as an exact rational
/// function; available when the Hessian of u is rational (no grid part).
template <class S>
RationalFunc<S> v_scalar_curvature_symbolic(const Polytope<S>& p, const Polynomial<S>& v,
                                            const SymplecticPotential<S>& u) {
  if (u.kind == PotentialKind::kGrid)
    throw Error("v_scalar_curvature_symbolic: grid corrections have no symbolic form");
  const std::size_t d = static_cast<std::size_t>(p.dim);

  // Hessian entries as rational functions.
  std::vector<std::vector<RationalFunc<S>>> g(
      d, std::vector<RationalFunc<S>>(d, RationalFunc<S>(p.dim)));
  for (const auto& label : p.labels) {
    Polynomial<S> ell = Polynomial<S>::affine(label);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        S c = S(label.normal[i] * label.normal[j] / scalar_from_long<S>(2));
        if (c == S(0)) continue;
        RationalFunc<S> term(Polynomial<S>::constant(p.dim, c), ell);
        g[i][j] = g[i][j] + term;
        if (i != j) g[j][i] = g[j][i] + term;
      }
    }
  }
  if (u.kind == PotentialKind::kPoly) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        RationalFunc<S> term = RationalFunc<S>::from(
            u.correction.partial(static_cast<int>(i)).partial(static_cast<int>(j)));
        g[i][j] = g[i][j] + term;
        if (i != j) g[j][i] = g[j][i] + term;
      }
  }

  // H = adj(G) / det(G) for d <= 2.
  RationalFunc<S> det(p.dim);
  std::vector<std::vector<RationalFunc<S>>> hmat(
      d, std::vector<RationalFunc<S>>(d, RationalFunc<S>(p.dim)));
  if (d == 1) {
    det = g[0][0];
    hmat[0][0] = RationalFunc<S>::from(Polynomial<S>::constant(p.dim, S(1))) / det;
  } else if (d == 2) {
    det = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    hmat[0][0] = g[1][1] / det;
    hmat[1][1] = g[0][0] / det;
    hmat[0][1] = -(g[0][1] / det);
    hmat[1][0] = hmat[0][1];
  } else {
    throw Error("v_scalar_curvature_symbolic: implemented for dimensions 1 and 2");
  }

  RationalFunc<S> vf = RationalFunc<S>::from(v);
  RationalFunc<S> scal(p.dim);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      scal = scal - (vf * hmat[i][j]).partial(static_cast<int>(i)).partial(static_cast<int>(j));
  return scal;
}

/// Finite-difference v-scalar curvature from potential values: the inverse
/// Hessian is assembled by inner central differences and the outer divergence
/// by second differences with the same step.  Probes must keep every label at
/// least 4h (times the normal's 1-norm) positive.
template <class S>
double v_scalar_curvature_fd(const Polytope<S>& p, const Polynomial<S>& v,
                             const SymplecticPotential<S>& u, const std::vector<double>& x,
                             double h) {
  const std::size_t d = static_cast<std::size_t>(p.dim);
  for (const auto& label : p.labels) {
    double l = to_double(label.offset);
    double n1 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      l += to_double(label.normal[i]) * x[i];
      n1 += std::fabs(to_double(label.normal[i]));
    }
    if (l < 4 * h * n1) throw Error("v_scalar_curvature_fd: probe too close to the boundary");
  }

  auto phi = [&](std::size_t i, std::size_t j, const std::vector<double>& y) {
    Mat<double> hm = inverse_hessian_fd(u, y, h);
    return v.eval_double(y) * hm(i, j);
  };
  double scal = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> y = x;
      double dij;
      if (i == j) {
        y[i] = x[i] + h;
        double a = phi(i, i, y);
        y[i] = x[i] - h;
        double b = phi(i, i, y);
        y[i] = x[i];
        dij = (a - 2 * phi(i, i, y) + b) / (h * h);
      } else {
        y[i] = x[i] + h;
        y[j] = x[j] + h;
        double pp = phi(i, j, y);
        y[j] = x[j] - h;
        double pm = phi(i, j, y);
        y[i] = x[i] - h;
        double mm = phi(i, j, y);
        y[j] = x[j] + h;
        double mp = phi(i, j, y);
        dij = (pp - pm - mp + mm) / (4 * h * h);
      }
      scal -= dij;
    }
  }
  return scal;
}

/// |int sum (v H_ij) f_{,ij} - int sum (v H_ij)_{,ij} f - 2 int_{dP} f v|,
/// all three terms exact.
template <class S>
double ibp_residual(const Polytope<S>& p, const Polynomial<S>& v, const MatrixField<S>& field,
                    const Polynomial<S>& f) {
  S first(0), second(0);
  for (int i = 0; i < p.dim; ++i) {
    for (int j = 0; j < p.dim; ++j) {
      Polynomial<S> vh = Polynomial<S>(v * field.at(i, j));
      first += integrate_interior(p, Polynomial<S>(vh * f.partial(i).partial(j)));
      second += integrate_interior(p, Polynomial<S>(vh.partial(i).partial(j) * f));
    }
  }
  S boundary = integrate_boundary(p, Polynomial<S>(f * v));
  return std::fabs(to_double(S(first - second - scalar_from_long<S>(2) * boundary)));
}

/// 2 int_{dP} u v dsigma -/+ int_P u w dx for the potential itself; the
/// L ln L parts evaluate through the closed-form log integrals.
template <class S>
double futaki_of_potential(const Polytope<S>& p, const WeightSystem<S>& ws,
                           const SymplecticPotential<S>& u) {
  double boundary = 0, interior = 0;
  for (std::size_t k = 0; k < p.labels.size(); ++k) {
    for (std::size_t j = 0; j < p.labels.size(); ++j)
      boundary += 0.5 * integrate_llogl_facet(p, j, ws.v, k);
    interior += 0.5 * integrate_llogl_interior(p, ws.w, k);
  }
  if (u.kind == PotentialKind::kPoly) {
    boundary += to_double(integrate_boundary(p, Polynomial<S>(u.correction * ws.v)));
    interior += to_double(integrate_interior(p, Polynomial<S>(u.correction * ws.w)));
  } else if (u.kind == PotentialKind::kGrid) {
    // 1D: endpoint values plus a Simpson pass over the grid nodes.
    const auto& g = u.grid;
    boundary += g.values.front() * ws.v.eval_double({g.lo}) +
                g.values.back() * ws.v.eval_double({g.hi});
    const std::size_t n = g.values.size();
    double hstep = g.spacing(), acc = 0;
    for (std::size_t i = 0; i + 2 < n; i += 2) {
      double x0 = g.lo + hstep * static_cast<double>(i);
      acc += hstep / 3 *
             (g.values[i] * ws.w.eval_double({x0}) +
              4 * g.values[i + 1] * ws.w.eval_double({x0 + hstep}) +
              g.values[i + 2] * ws.w.eval_double({x0 + 2 * hstep}));
    }
    interior += acc;
  }
  return ws.sign == FutakiSign::kConsistent ? 2 * boundary - interior : 2 * boundary + interior;
}

namespace detail {

/// det Hess u at a double point, analytic for poly corrections and by finite
/// differences for grid corrections.
template <class S>
double det_hessian_double(const SymplecticPotential<S>& u, const std::vector<double>& x,
                          double h) {
  const std::size_t d = x.size();
  Mat<double> g(d, d);
  if (u.kind == PotentialKind::kGrid) {
    // Shrink the stencil near the boundary so every sample stays interior.
    double dist = std::numeric_limits<double>::infinity();
    for (const auto& label : u.domain.labels) {
      double l = to_double(label.offset), n1 = 0;
      for (std::size_t i = 0; i < d; ++i) {
        l += to_double(label.normal[i]) * x[i];
        n1 += std::fabs(to_double(label.normal[i]));
      }
      if (n1 > 0) dist = std::min(dist, l / n1);
    }
    double hstep = std::min(h, 0.45 * dist);
    if (hstep <= 0) return 0;
    g = hessian_fd(u, x, hstep);
  } else {
    for (const auto& label : u.domain.labels) {
      double l = to_double(label.offset);
      for (std::size_t i = 0; i < d; ++i) l += to_double(label.normal[i]) * x[i];
      if (l <= 0) return 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          g(i, j) += to_double(label.normal[i]) * to_double(label.normal[j]) / (2 * l);
    }
    if (u.kind == PotentialKind::kPoly) {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          g(i, j) += u.correction.partial(static_cast<int>(i))
                         .partial(static_cast<int>(j))
                         .eval_double(x);
    }
  }
  if (d == 1) return g(0, 0);
  return g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
}

struct LogDetResult {
  double value = 0;
  std::size_t probes = 0;
  std::size_t degenerate = 0;
};

/// int over the margin-shrunk polytope of  v ln(det Hess u / det Hess u0),
/// by centroid quadrature with one Richardson level on sub-simplices.
template <class S>
LogDetResult logdet_integral(const Polytope<S>& p, const Polynomial<S>& v,
                             const SymplecticPotential<S>& u, const S& margin, int subdiv,
                             double fd_h) {
  Polytope<S> shrunk = p;
  for (std::size_t j = 0; j < p.labels.size(); ++j)
    shrunk = clip(shrunk, p.labels[j].normal, S(margin - p.labels[j].offset));
  LogDetResult res;
  if (shrunk.vertices.size() < static_cast<std::size_t>(p.dim) + 1) return res;

  SymplecticPotential<S> u0 = guillemin_potential(p);
  auto integrand = [&](const std::vector<double>& x, bool& degenerate) {
    double du = det_hessian_double(u, x, fd_h);
    double d0 = det_hessian_double(u0, x, fd_h);
    if (du < 1e-14 || d0 < 1e-300) {
      degenerate = true;
      return 0.0;
    }
    degenerate = false;
    return v.eval_double(x) * std::log(du / d0);
  };

  auto level_value = [&](int s) {
    double total = 0;
    for (const auto& simplex : triangulate(shrunk)) {
      std::vector<std::vector<double>> verts;
      for (const auto& vtx : simplex) {
        std::vector<double> x(vtx.size());
        for (std::size_t i = 0; i < vtx.size(); ++i) x[i] = to_double(vtx[i]);
        verts.push_back(std::move(x));
      }
      double vol = std::fabs(to_double(simplex_det(simplex)));
      const std::size_t dd = verts.size() - 1;
      if (dd == 1) {
        double cell = vol / s;
        for (int i = 0; i < s; ++i) {
          double t = (i + 0.5) / s;
          std::vector<double> x{verts[0][0] + t * (verts[1][0] - verts[0][0])};
          bool deg = false;
          double val = integrand(x, deg);
          ++res.probes;
          if (deg) ++res.degenerate;
          total += val * cell;
        }
      } else {
        // Uniform refinement of the triangle into s^2 copies: up-triangles
        // at (i,j) and down-triangles where they fit; centroid sampling.
        double cell = vol / (2.0 * s * s);
        for (int i = 0; i < s; ++i) {
          for (int j = 0; j < s - i; ++j) {
            double b0 = (i + 1.0 / 3) / s, b1 = (j + 1.0 / 3) / s;
            std::vector<double> x(2);
            for (std::size_t c = 0; c < 2; ++c)
              x[c] = verts[0][c] + b0 * (verts[1][c] - verts[0][c]) +
                     b1 * (verts[2][c] - verts[0][c]);
            bool deg = false;
            double val = integrand(x, deg);
            ++res.probes;
            if (deg) ++res.degenerate;
            total += val * cell;
            if (j < s - i - 1) {
              double c0 = (i + 2.0 / 3) / s, c1 = (j + 2.0 / 3) / s;
              for (std::size_t c = 0; c < 2; ++c)
                x[c] = verts[0][c] + c0 * (verts[1][c] - verts[0][c]) +
                       c1 * (verts[2][c] - verts[0][c]);
            bool deg2 = false;
              double val2 = integrand(x, deg2);
              ++res.probes;
              if (deg2) ++res.degenerate;
              total += val2 * cell;
            }
          }
        }
      }
    }
    return total;
  };

  double coarse = level_value(subdiv / 2), fine = level_value(subdiv);
  res.value = (4 * fine - coarse) / 3;
  return res;
}

}  // namespace detail

struct MabuchiOptions {
  double margin = 1e-5;
  int subdivisions = 0;  // 0: pick by dimension (4096 in 1D, 192 in 2D)
};

/// F_{v,w}(u) minus the weighted log-det entropy term; +infinity when the
/// Hessian determinant degenerates on more than 1% of the probes.
template <class S>
double mabuchi_energy(const Polytope<S>& p, const WeightSystem<S>& ws,
                      const SymplecticPotential<S>& u, const MabuchiOptions& opts = {}) {
  double fu = futaki_of_potential(p, ws, u);
  if (u.kind == PotentialKind::kGuillemin) return fu;  // log-det term is identically zero

  int subdiv = opts.subdivisions > 0 ? opts.subdivisions : (p.dim == 1 ? 4096 : 192);
  double fd_h = default_fd_step(p) / 4;
  S m(0);
  {
    // margin as an exact scalar close to the requested double
    long long den = 1LL << 40;
    m = S(scalar_from_long<S>(std::llround(opts.margin * static_cast<double>(den))) /
          scalar_from_long<S>(den));
  }
  auto i1 = detail::logdet_integral(p, ws.v, u, m, subdiv, fd_h);
  auto i2 = detail::logdet_integral(p, ws.v, u, S(m * scalar_from_long<S>(2)), subdiv, fd_h);
  std::size_t probes = i1.probes + i2.probes, degenerate = i1.degenerate + i2.degenerate;
  if (probes == 0 || degenerate * 100 > probes)
    return std::numeric_limits<double>::infinity();
  double logdet = 2 * i1.value - i2.value;
  return fu - logdet;
}

/// Mabuchi energy of a raw PL candidate: its Hessian vanishes almost
/// everywhere, so the extension rule applies.
template <class S>
double mabuchi_energy(const Polytope<S>& p, const WeightSystem<S>& ws, const TestFunction<S>& u) {
  (void)ws;
  auto [lo, hi] = bounding_box(p);
  double h = default_fd_step(p);
  std::size_t probes = 0, degenerate = 0;
  const int n = 48;
  std::vector<int> idx(static_cast<std::size_t>(p.dim), 0);
  while (true) {
    Vec<S> pt(static_cast<std::size_t>(p.dim));
    std::vector<double> x(static_cast<std::size_t>(p.dim));
    for (int i = 0; i < p.dim; ++i) {
      S t = S(scalar_from_long<S>(2 * idx[static_cast<std::size_t>(i)] + 1) /
              scalar_from_long<S>(2 * n));
      pt[static_cast<std::size_t>(i)] =
          lo[static_cast<std::size_t>(i)] +
          t * (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]);
      x[static_cast<std::size_t>(i)] = to_double(pt[static_cast<std::size_t>(i)]);
    }
    if (contains(p, pt)) {
      ++probes;
      // FD Hessian of the PL function itself.
      const std::size_t d = x.size();
      Mat<double> g(d, d);
      auto value = [&](const std::vector<double>& y) {
        Vec<S> ry(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) ry[i] = detail::snapped_offset<S>(y[i]);
        return to_double(u.eval(ry));
      };
      double center = value(x);
      bool deg = true;
      for (std::size_t i = 0; i < d && deg; ++i) {
        std::vector<double> yp = x, ym = x;
        yp[i] += h;
        ym[i] -= h;
        double second = (value(yp) - 2 * center + value(ym)) / (h * h);
        if (std::fabs(second) > 1e-7) deg = false;
      }
      if (deg) ++degenerate;
    }
    int i = 0;
    for (; i < p.dim; ++i) {
      if (++idx[static_cast<std::size_t>(i)] < n) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
    if (i == p.dim) break;
  }
  if (degenerate * 100 > probes) return std::numeric_limits<double>::infinity();
  throw Error("mabuchi_energy: PL input with non-degenerate Hessian probes");
}

/// Shifts the correction so the v-weighted mean of u matches that of u0.
template <class S>
SymplecticPotential<S> normalize_potential(const Polytope<S>& p, const Polynomial<S>& v,
                                           const SymplecticPotential<S>& u) {
  SymplecticPotential<S> out = u;
  S mass = integrate_interior(p, v);
  if (u.kind == PotentialKind::kPoly) {
    S mean = S(integrate_interior(p, Polynomial<S>(u.correction * v)) / mass);
    out.correction.add_term(Exponents{}, S(-mean));
  } else if (u.kind == PotentialKind::kGrid) {
    // Simpson over the grid against v.
    const auto& g = u.grid;
    double hstep = g.spacing(), acc = 0;
    for (std::size_t i = 0; i + 2 < g.values.size(); i += 2) {
      double x0 = g.lo + hstep * static_cast<double>(i);
      acc += hstep / 3 *
             (g.values[i] * v.eval_double({x0}) +
              4 * g.values[i + 1] * v.eval_double({x0 + hstep}) +
              g.values[i + 2] * v.eval_double({x0 + 2 * hstep}));
    }
    double shift = acc / to_double(mass);
    for (double& val : out.grid.values) val -= shift;
  }
  return out;
}

}  // namespace kstab
