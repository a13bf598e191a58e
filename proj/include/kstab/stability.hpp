#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "kstab/polytope.hpp"
#include "kstab/quadrature.hpp"
#include "kstab/scalar.hpp"
#include "kstab/weights.hpp"

namespace kstab {

/// Piecewise linear or polynomial test functions for the stability pairing.
/// Convex PL functions are stored as a max of affine pieces; a crease keeps
/// the implicit zero piece at index 0.
enum class TestFunctionKind { kAffine, kCrease, kPLMax, kPoly };

template <class S>
struct TestFunction {
  TestFunctionKind kind = TestFunctionKind::kAffine;
  std::vector<AffineFunc<S>> pieces;
  Polynomial<S> poly;

  S eval(const Vec<S>& x) const {
    if (kind == TestFunctionKind::kPoly) return poly.eval(x);
    S best = pieces.front().eval(x);
    for (std::size_t i = 1; i < pieces.size(); ++i) best = std::max(best, pieces[i].eval(x));
    return best;
  }
};

template <class S>
TestFunction<S> affine_function(AffineFunc<S> a) {
  TestFunction<S> f;
  f.kind = TestFunctionKind::kAffine;
  f.pieces.push_back(std::move(a));
  return f;
}

/// max(0, <h, x> - c).
template <class S>
TestFunction<S> crease_function(Vec<S> h, S c) {
  TestFunction<S> f;
  f.kind = TestFunctionKind::kCrease;
  f.pieces.push_back(AffineFunc<S>(Vec<S>(h.size(), S(0)), S(0)));
  f.pieces.push_back(AffineFunc<S>(std::move(h), S(-c)));
  return f;
}

template <class S>
TestFunction<S> plmax_function(std::vector<AffineFunc<S>> pieces) {
  if (pieces.empty()) throw Error("plmax_function: at least one piece required");
  TestFunction<S> f;
  f.kind = TestFunctionKind::kPLMax;
  f.pieces = std::move(pieces);
  return f;
}

template <class S>
TestFunction<S> poly_function(Polynomial<S> p) {
  TestFunction<S> f;
  f.kind = TestFunctionKind::kPoly;
  f.poly = std::move(p);
  return f;
}

namespace detail {

/// Region of P where piece i attains the max; empty optional when the region
/// has no chance of carrying measure.
template <class S>
std::optional<Polytope<S>> dominance_region(const Polytope<S>& p,
                                            const std::vector<AffineFunc<S>>& pieces,
                                            std::size_t i) {
  Polytope<S> region = p;
  for (std::size_t j = 0; j < pieces.size(); ++j) {
    if (j == i) continue;
    Vec<S> h = vec_sub(pieces[i].normal, pieces[j].normal);
    S c = S(pieces[j].offset - pieces[i].offset);
    bool zero = true;
    for (const S& hi : h) zero = zero && hi == S(0);
    if (zero) {
      // Piece j dominates everywhere, or duplicates piece i with a lower index.
      if (pieces[i].offset < pieces[j].offset ||
          (pieces[i].offset == pieces[j].offset && j < i))
        return std::nullopt;
      continue;
    }
    region = clip(region, h, c);
    if (region.vertices.size() < static_cast<std::size_t>(p.dim) + 1) return std::nullopt;
  }
  return region;
}

/// True when the affine function vanishes on every vertex of facet j.
template <class S>
bool vanishes_on_facet(const Polytope<S>& p, std::size_t j, const AffineFunc<S>& a) {
  if (p.facet_vertices[j].empty()) return false;
  for (std::size_t vi : p.facet_vertices[j])
    if (a.eval(p.vertices[vi]) != S(0)) return false;
  return true;
}

}  // namespace detail

/// The stability pairing 2 int_{dP} f v dsigma -/+ int_P f w dx for PL and
/// polynomial test functions, exact over exact scalars.  PL functions are
/// integrated over the regions where each piece dominates; when two pieces
/// agree identically along a facet only one representative is counted there.
template <class S>
S futaki(const Polytope<S>& p, const WeightSystem<S>& ws, const TestFunction<S>& f) {
  if (f.kind == TestFunctionKind::kPoly) return futaki_polynomial(p, ws, f.poly);
  if (f.kind == TestFunctionKind::kAffine)
    return futaki_polynomial(p, ws, Polynomial<S>::affine(f.pieces.front()));

  const std::size_t n_facets = p.labels.size();
  S boundary(0), interior(0);
  for (std::size_t i = 0; i < f.pieces.size(); ++i) {
    auto region = detail::dominance_region(p, f.pieces, i);
    if (!region) continue;
    Polynomial<S> gi = Polynomial<S>::affine(f.pieces[i]);
    interior += integrate_interior(*region, Polynomial<S>(gi * ws.w));
    for (std::size_t j = 0; j < n_facets; ++j) {
      // Skip pieces that coincide with an earlier piece on this facet: their
      // restricted dominance regions are identical and must count once.
      bool duplicate = false;
      for (std::size_t k = 0; k < i && !duplicate; ++k) {
        AffineFunc<S> diff(vec_sub(f.pieces[i].normal, f.pieces[k].normal),
                           S(f.pieces[i].offset - f.pieces[k].offset));
        duplicate = detail::vanishes_on_facet(p, j, diff);
      }
      if (duplicate) continue;
      boundary += integrate_facet(*region, j, Polynomial<S>(gi * ws.v));
    }
  }
  S two = scalar_from_long<S>(2);
  return ws.sign == FutakiSign::kConsistent ? S(two * boundary - interior)
                                            : S(two * boundary + interior);
}

/// Subtracts the supporting affine function at the barycenter, averaging the
/// gradients of all pieces active there.  For convex PL input the result is
/// nonnegative and vanishes at the barycenter.
template <class S>
TestFunction<S> normalize(const Polytope<S>& p, const TestFunction<S>& f) {
  Vec<S> x0 = barycenter(p);
  if (f.kind == TestFunctionKind::kPoly) {
    Vec<S> grad(static_cast<std::size_t>(p.dim));
    for (int i = 0; i < p.dim; ++i) grad[static_cast<std::size_t>(i)] = f.poly.partial(i).eval(x0);
    S off = S(f.poly.eval(x0) - dot(grad, x0));
    Polynomial<S> support = Polynomial<S>::affine(AffineFunc<S>(std::move(grad), off));
    return poly_function(Polynomial<S>(f.poly - support));
  }

  S m = f.eval(x0);
  const double scale = 1.0 + std::fabs(to_double(m));
  Vec<S> avg(static_cast<std::size_t>(p.dim), S(0));
  long active = 0;
  for (const auto& piece : f.pieces) {
    if (std::fabs(to_double(S(m - piece.eval(x0)))) > 1e-12 * scale) continue;
    avg = vec_add(avg, piece.normal);
    ++active;
  }
  avg = vec_scale(S(S(1) / scalar_from_long<S>(active)), avg);
  AffineFunc<S> support(avg, S(m - dot(avg, x0)));

  TestFunction<S> out;
  out.kind = f.kind == TestFunctionKind::kAffine ? TestFunctionKind::kAffine
                                                 : TestFunctionKind::kPLMax;
  for (const auto& piece : f.pieces)
    out.pieces.push_back(AffineFunc<S>(vec_sub(piece.normal, support.normal),
                                       S(piece.offset - support.offset)));
  return out;
}

/// int_P |f| dx, exact for PL functions via sign splits of the dominance
/// regions.  Polynomial input must be verifiably nonnegative on a probe grid.
template <class S>
S l1_norm(const Polytope<S>& p, const TestFunction<S>& f) {
  if (f.kind == TestFunctionKind::kPoly) {
    auto [lo, hi] = bounding_box(p);
    const int n = 24;
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
      if (contains(p, pt) && to_double(f.poly.eval(pt)) < -1e-12)
        throw Error("l1_norm: polynomial test function must be nonnegative");
      int i = 0;
      for (; i < p.dim; ++i) {
        if (++idx[static_cast<std::size_t>(i)] < n) break;
        idx[static_cast<std::size_t>(i)] = 0;
      }
      if (i == p.dim) break;
    }
    return integrate_interior(p, f.poly);
  }

  S total(0);
  for (std::size_t i = 0; i < f.pieces.size(); ++i) {
    auto region = detail::dominance_region(p, f.pieces, i);
    if (!region) continue;
    Polynomial<S> gi = Polynomial<S>::affine(f.pieces[i]);
    Vec<S> h = f.pieces[i].normal;
    bool zero = true;
    for (const S& hi : h) zero = zero && hi == S(0);
    if (zero) {
      total += abs_value(f.pieces[i].offset) * volume(*region);
      continue;
    }
    auto pos = clip(*region, h, S(-f.pieces[i].offset));
    if (pos.vertices.size() > static_cast<std::size_t>(p.dim))
      total += integrate_interior(pos, gi);
    auto neg = clip(*region, vec_scale(S(-1), h), f.pieces[i].offset);
    if (neg.vertices.size() > static_cast<std::size_t>(p.dim))
      total -= integrate_interior(neg, gi);
  }
  return total;
}

template <class S>
struct CreaseSample {
  Vec<S> h;
  S c{0};
  double futaki_value = 0;
  double l1 = 0;
  double ratio = 0;
};

template <class S>
struct StabilityReport {
  /// Minimum of futaki(f*) / |f*|_1 over the sampled creases.
  double lambda_hat = 0;
  CreaseSample<S> worst;
  std::vector<CreaseSample<S>> negatives;
  std::size_t samples = 0;
};

struct ScanOptions {
  int directions = 64;  // crease normals sampled on the circle (2D)
  int offsets = 24;     // offsets per direction, strictly interior
  int refine_top = 3;   // directions refined by golden section in the offset
  int refine_iters = 40;
  double margin = 1e-3;  // relative margin keeping offsets away from the range ends
};

namespace detail {

/// Rational direction close to (cos t, sin t), snapped to denominator 2^20.
template <class S>
Vec<S> snapped_direction(double angle) {
  const long long den = 1 << 20;
  S d = scalar_from_long<S>(den);
  long long a = std::llround(std::cos(angle) * static_cast<double>(den));
  long long b = std::llround(std::sin(angle) * static_cast<double>(den));
  return Vec<S>{S(scalar_from_long<S>(a) / d), S(scalar_from_long<S>(b) / d)};
}

template <class S>
std::optional<CreaseSample<S>> evaluate_crease(const Polytope<S>& p, const WeightSystem<S>& ws,
                                               const Vec<S>& h, const S& c) {
  TestFunction<S> star = normalize(p, crease_function(h, c));
  S n1 = l1_norm(p, star);
  if (to_double(n1) < 1e-14) return std::nullopt;
  S fut = futaki(p, ws, star);
  CreaseSample<S> s;
  s.h = h;
  s.c = c;
  s.futaki_value = to_double(fut);
  s.l1 = to_double(n1);
  s.ratio = s.futaki_value / s.l1;
  return s;
}

/// Snap a double offset to denominator 2^32 so crease evaluations stay exact.
template <class S>
S snapped_offset(double c) {
  const double den = 4294967296.0;
  double num = std::floor(c * den + 0.5);
  S r = scalar_from_long<S>(static_cast<long long>(num));
  return S(r / scalar_from_long<S>(1LL << 32));
}

}  // namespace detail

/// Samples normalized creases max(0, <h,x> - c) over rational directions and
/// interior offsets, reporting the minimal futaki / l1 ratio and every sample
/// with a negative pairing.
template <class S>
StabilityReport<S> stability_scan(const Polytope<S>& p, const WeightSystem<S>& ws,
                                  const ScanOptions& opts = {}) {
  if (p.dim > 2)
    throw Error("stability_scan: crease scan implemented for dimensions 1 and 2");

  std::vector<Vec<S>> directions;
  if (p.dim == 1) {
    directions.push_back(Vec<S>{S(1)});
    directions.push_back(Vec<S>{S(-1)});
  } else {
    for (int t = 0; t < opts.directions; ++t) {
      double angle = 2.0 * std::numbers::pi * t / opts.directions;
      Vec<S> h = detail::snapped_direction<S>(angle);
      if (h[0] == S(0) && h[1] == S(0)) continue;
      directions.push_back(std::move(h));
    }
  }

  StabilityReport<S> report;
  report.lambda_hat = std::numeric_limits<double>::infinity();
  struct DirBest {
    std::size_t dir;
    double ratio;
    double lo, hi;  // offset bracket for refinement
    double at;
  };
  std::vector<DirBest> bests;

  for (std::size_t d = 0; d < directions.size(); ++d) {
    const Vec<S>& h = directions[d];
    S lo = dot(h, p.vertices.front()), hi = lo;
    for (const auto& v : p.vertices) {
      S val = dot(h, v);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    if (!(hi > lo)) continue;
    S range = S(hi - lo);
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_at = 0;
    for (int k = 0; k < opts.offsets; ++k) {
      S c = S(lo + range * scalar_from_long<S>(k + 1) / scalar_from_long<S>(opts.offsets + 1));
      auto sample = detail::evaluate_crease(p, ws, h, c);
      if (!sample) continue;
      ++report.samples;
      if (sample->futaki_value < 0) report.negatives.push_back(*sample);
      if (sample->ratio < report.lambda_hat) {
        report.lambda_hat = sample->ratio;
        report.worst = *sample;
      }
      if (sample->ratio < best_ratio) {
        best_ratio = sample->ratio;
        best_at = to_double(c);
      }
    }
    if (std::isfinite(best_ratio)) {
      double margin = opts.margin * to_double(range);
      bests.push_back({d, best_ratio, to_double(lo) + margin, to_double(hi) - margin, best_at});
    }
  }

  std::sort(bests.begin(), bests.end(),
            [](const DirBest& a, const DirBest& b) { return a.ratio < b.ratio; });
  if (static_cast<int>(bests.size()) > opts.refine_top) bests.resize(opts.refine_top);

  // Golden-section refinement of the offset for the most negative directions;
  // every evaluation still runs on an exactly snapped offset.
  const double gr = (std::sqrt(5.0) - 1) / 2;
  for (const auto& db : bests) {
    const Vec<S>& h = directions[db.dir];
    double a = db.lo, b = db.hi;
    double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
    auto value = [&](double c) {
      auto sample = detail::evaluate_crease(p, ws, h, detail::snapped_offset<S>(c));
      if (!sample) return std::numeric_limits<double>::infinity();
      ++report.samples;
      if (sample->futaki_value < 0) report.negatives.push_back(*sample);
      if (sample->ratio < report.lambda_hat) {
        report.lambda_hat = sample->ratio;
        report.worst = *sample;
      }
      return sample->ratio;
    };
    double f1 = value(c1), f2 = value(c2);
    for (int it = 0; it < opts.refine_iters; ++it) {
      if (f1 < f2) {
        b = c2;
        c2 = c1;
        f2 = f1;
        c1 = b - gr * (b - a);
        f1 = value(c1);
      } else {
        a = c1;
        c1 = c2;
        f1 = f2;
        c2 = a + gr * (b - a);
        f2 = value(c2);
      }
    }
  }
  return report;
}

}  // namespace kstab
