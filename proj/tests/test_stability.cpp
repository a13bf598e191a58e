#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "kstab/stability.hpp"

using kstab::AffineFunc;
using kstab::FibrationData;
using kstab::FutakiSign;
using kstab::Polynomial;
using kstab::Polytope;
using kstab::Rational;
using kstab::TestFunction;
using kstab::TestFunctionKind;
using kstab::Vec;
using kstab::build_polytope;
using kstab::build_weight_system;
using kstab::crease_function;
using kstab::futaki;
using kstab::l1_norm;
using kstab::normalize;
using kstab::to_double;

namespace {

Polytope<Rational> interval01() {
  return build_polytope<Rational>({{1}, {-1}}, {Rational(0), Rational(1)});
}

Polytope<Rational> simplex2() {
  return build_polytope<Rational>({{1, 0}, {0, 1}, {-1, -1}},
                                  {Rational(0), Rational(0), Rational(1)});
}

FibrationData<Rational> trivial_fibration(int dim) {
  FibrationData<Rational> fib;
  fib.factors.push_back({std::vector<long long>(dim, 0), Rational(1), 1, Rational(0)});
  return fib;
}

kstab::WeightSystem<Rational> destabilized_interval_weights(const Polytope<Rational>& p) {
  // v = 1 with w = 36 - 192 x + 192 x^2: the affine pairings still vanish,
  // but the crease at 1/2 pairs negatively.
  Polynomial<Rational> w(1);
  w.add_term({0, 0, 0, 0}, Rational(36));
  w.add_term({1, 0, 0, 0}, Rational(-192));
  w.add_term({2, 0, 0, 0}, Rational(192));
  return kstab::weight_system_from_polynomials(
      p, Polynomial<Rational>::constant(1, Rational(1)), w);
}

}  // namespace

TEST_CASE("crease pairing on the interval has the exact closed form", "[stability]") {
  auto p = interval01();
  auto ws = build_weight_system(p, trivial_fibration(1));
  // f = max(0, x - c) gives 2(1 - c) - 4 (1-c)^2 / 2 = 2 c (1 - c).
  for (Rational c : {Rational(1, 2), Rational(1, 4), Rational(2, 3)}) {
    auto f = crease_function<Rational>({Rational(1)}, c);
    CHECK(futaki(p, ws, f) == Rational(2) * c * (Rational(1) - c));
  }
  auto f = crease_function<Rational>({Rational(1)}, Rational(1, 2));
  CHECK(futaki(p, ws, f) == Rational(1, 2));
}

TEST_CASE("crease pairing on the triangle has the exact closed form", "[stability]") {
  auto p = simplex2();
  auto ws = build_weight_system(p, trivial_fibration(2));
  // f = max(0, x - 1/2): boundary integral 1/4, interior integral 1/48.
  auto f = crease_function<Rational>({Rational(1), Rational(0)}, Rational(1, 2));
  CHECK(futaki(p, ws, f) == Rational(1, 4));
}

TEST_CASE("pairing is invariant under adding affine functions", "[stability]") {
  auto p = simplex2();
  FibrationData<Rational> fib;
  fib.factors.push_back({{1, 1}, Rational(2), 1, Rational(1)});
  auto ws = build_weight_system(p, fib);

  auto f = crease_function<Rational>({Rational(1), Rational(-1)}, Rational(1, 8));
  Rational base = futaki(p, ws, f);

  // Shift every piece by the same affine function.
  AffineFunc<Rational> a({Rational(3, 2), Rational(-1, 3)}, Rational(5, 7));
  TestFunction<Rational> shifted = f;
  for (auto& piece : shifted.pieces) {
    piece.normal = kstab::vec_add(piece.normal, a.normal);
    piece.offset += a.offset;
  }
  shifted.kind = TestFunctionKind::kPLMax;
  CHECK(futaki(p, ws, shifted) == base + futaki(p, ws, kstab::affine_function(a)));
  CHECK(futaki(p, ws, kstab::affine_function(a)) == Rational(0));
}

TEST_CASE("pairing is positively homogeneous", "[stability]") {
  auto p = interval01();
  auto ws = build_weight_system(p, trivial_fibration(1));
  auto f = crease_function<Rational>({Rational(1)}, Rational(1, 3));
  TestFunction<Rational> scaled = f;
  for (auto& piece : scaled.pieces) {
    piece.normal = kstab::vec_scale(Rational(7, 2), piece.normal);
    piece.offset *= Rational(7, 2);
  }
  CHECK(futaki(p, ws, scaled) == Rational(7, 2) * futaki(p, ws, f));
}

TEST_CASE("polynomial and PL pairings agree on affine input", "[stability]") {
  auto p = simplex2();
  FibrationData<Rational> fib;
  fib.factors.push_back({{0, 1}, Rational(3), 2, Rational(-2)});
  auto ws = build_weight_system(p, fib);
  AffineFunc<Rational> a({Rational(2), Rational(-5)}, Rational(1, 4));
  Polynomial<Rational> pa = Polynomial<Rational>::affine(a);
  CHECK(futaki(p, ws, kstab::affine_function(a)) == kstab::futaki_polynomial(p, ws, pa));
  CHECK(futaki(p, ws, kstab::affine_function(a)) == Rational(0));
}

TEST_CASE("normalization subtracts the supporting function at the barycenter", "[stability]") {
  auto p = interval01();

  // Barycenter 1/2 lies strictly above the crease at 1/4: the active piece is
  // x - 1/4, so f* = max(0, x - 1/4) - (x - 1/4) = max(0, 1/4 - x).
  auto f = crease_function<Rational>({Rational(1)}, Rational(1, 4));
  auto star = normalize(p, f);
  REQUIRE(star.kind == TestFunctionKind::kPLMax);
  CHECK(star.eval({Rational(0)}) == Rational(1, 4));
  CHECK(star.eval({Rational(1, 4)}) == Rational(0));
  CHECK(star.eval({Rational(1)}) == Rational(0));
  CHECK(star.eval({Rational(1, 2)}) == Rational(0));

  // Crease exactly at the barycenter: both pieces are active, the averaged
  // slope is 1/2, and f* = |x - 1/2| / 2.
  auto tie = crease_function<Rational>({Rational(1)}, Rational(1, 2));
  auto tie_star = normalize(p, tie);
  CHECK(tie_star.eval({Rational(0)}) == Rational(1, 4));
  CHECK(tie_star.eval({Rational(1)}) == Rational(1, 4));
  CHECK(tie_star.eval({Rational(1, 2)}) == Rational(0));
  CHECK(tie_star.eval({Rational(3, 4)}) == Rational(1, 8));

  // Affine input normalizes to zero.
  auto aff = kstab::affine_function(AffineFunc<Rational>({Rational(3)}, Rational(-1)));
  auto aff_star = normalize(p, aff);
  CHECK(aff_star.kind == TestFunctionKind::kAffine);
  CHECK(aff_star.eval({Rational(0)}) == Rational(0));
  CHECK(aff_star.eval({Rational(1)}) == Rational(0));
}

TEST_CASE("normalization fixes the pairing value on normalized systems", "[stability]") {
  auto p = simplex2();
  FibrationData<Rational> fib;
  fib.factors.push_back({{1, 2}, Rational(4), 1, Rational(2)});
  auto ws = build_weight_system(p, fib);
  auto f = crease_function<Rational>({Rational(2), Rational(1)}, Rational(1, 3));
  CHECK(futaki(p, ws, normalize(p, f)) == futaki(p, ws, f));
}

TEST_CASE("l1 norms of PL functions are exact", "[stability]") {
  auto p = interval01();
  // |x - 1/2| / 2 integrates to 1/8.
  auto tie_star = normalize(p, crease_function<Rational>({Rational(1)}, Rational(1, 2)));
  CHECK(l1_norm(p, tie_star) == Rational(1, 8));

  // max(0, 1/4 - x) integrates to 1/32.
  auto star = normalize(p, crease_function<Rational>({Rational(1)}, Rational(1, 4)));
  CHECK(l1_norm(p, star) == Rational(1, 32));

  // A signed affine function: int_0^1 |x - 1/4| = 5/16.
  auto aff = kstab::affine_function(AffineFunc<Rational>({Rational(1)}, Rational(-1, 4)));
  CHECK(l1_norm(p, aff) == Rational(5, 16));

  // Triangle: int over the simplex of max(0, x - 1/2) = 1/48.
  auto p2 = simplex2();
  auto f2 = crease_function<Rational>({Rational(1), Rational(0)}, Rational(1, 2));
  CHECK(l1_norm(p2, f2) == Rational(1, 48));
}

TEST_CASE("polynomial l1 norms require nonnegativity", "[stability]") {
  auto p = interval01();
  Polynomial<Rational> sq(1);
  sq.add_term({2, 0, 0, 0}, Rational(1));
  CHECK(l1_norm(p, kstab::poly_function(sq)) == Rational(1, 3));
  Polynomial<Rational> signedp(1);
  signedp.add_term({1, 0, 0, 0}, Rational(1));
  signedp.add_term({0, 0, 0, 0}, Rational(-1, 2));
  CHECK_THROWS_AS(l1_norm(p, kstab::poly_function(signedp)), kstab::Error);
}

TEST_CASE("interval scan finds the minimal normalized ratio", "[stability]") {
  auto p = interval01();
  auto ws = build_weight_system(p, trivial_fibration(1));
  // The normalized ratio for a crease at c is 4(1-c)/c for c < 1/2 and
  // 4c/(1-c) for c > 1/2, minimized at 4.
  kstab::ScanOptions opts;
  opts.offsets = 31;
  auto report = kstab::stability_scan(p, ws, opts);
  CHECK(report.lambda_hat == Catch::Approx(4.0).epsilon(1e-3));
  CHECK(report.negatives.empty());
  CHECK(to_double(report.worst.c) == Catch::Approx(0.5).margin(2e-2));
}

TEST_CASE("scan flags destabilizing weights with an explicit witness", "[stability]") {
  auto p = interval01();
  auto ws = destabilized_interval_weights(p);
  // Affine pairings vanish for this system, so it is honestly normalized.
  for (const Rational& r : affine_vanishing_residuals(p, ws)) CHECK(r == Rational(0));
  // The crease at 1/2 pairs to -1/2 before normalization.
  auto f = crease_function<Rational>({Rational(1)}, Rational(1, 2));
  CHECK(futaki(p, ws, f) == Rational(-1, 2));

  auto report = kstab::stability_scan(p, ws);
  CHECK(report.lambda_hat < 0);
  REQUIRE_FALSE(report.negatives.empty());
  // The reported witness must itself verify.
  auto star = normalize(p, crease_function(report.worst.h, report.worst.c));
  CHECK(to_double(futaki(p, ws, star)) < 0);
}

TEST_CASE("triangle scan stays positive for the unweighted system", "[stability]") {
  auto p = simplex2();
  auto ws = build_weight_system(p, trivial_fibration(2));
  kstab::ScanOptions opts;
  opts.directions = 24;
  opts.offsets = 12;
  opts.refine_top = 2;
  opts.refine_iters = 20;
  auto report = kstab::stability_scan(p, ws, opts);
  CHECK(report.negatives.empty());
  CHECK(report.lambda_hat > 0);
  CHECK(report.samples > 200);
}

TEST_CASE("pairing decomposition matches direct evaluation on random creases", "[stability]") {
  // Cross-check the dominance-region decomposition against plain numerical
  // quadrature of the same integrand on a fine grid.
  auto p = simplex2();
  FibrationData<Rational> fib;
  fib.factors.push_back({{1, 0}, Rational(2), 1, Rational(1)});
  auto ws = build_weight_system(p, fib);

  std::mt19937 rng(55);
  std::uniform_int_distribution<int> coef(-3, 3);
  for (int trial = 0; trial < 5; ++trial) {
    long long a = coef(rng), b = coef(rng);
    if (a == 0 && b == 0) a = 1;
    Vec<Rational> h{Rational(a), Rational(b)};
    Rational c(coef(rng), 8);
    auto f = crease_function(h, c);
    double exact = to_double(futaki(p, ws, f));

    // Interior part via y-strips with the exact diagonal cut, so no in/out
    // misclassification bias enters; boundary part by 1D sampling of each
    // edge, parametrized so the step matches the projected boundary measure.
    const int n = 700;
    double interior = 0;
    for (int i = 0; i < n; ++i) {
      double x = (i + 0.5) / n;
      double height = 1.0 - x;
      for (int j = 0; j < n; ++j) {
        double y = (j + 0.5) * height / n;
        double fv = std::max(0.0, to_double(h[0]) * x + to_double(h[1]) * y - to_double(c));
        interior += fv * ws.w.eval_double({x, y}) * height / (n * double(n));
      }
    }
    double boundary = 0;
    const int m = 20000;
    const double starts[3][2] = {{0, 0}, {0, 0}, {0, 1}};
    const double steps[3][2] = {{0, 1}, {1, 0}, {1, -1}};
    for (int e = 0; e < 3; ++e) {
      for (int i = 0; i < m; ++i) {
        double t = (i + 0.5) / m;
        double x = starts[e][0] + steps[e][0] * t, y = starts[e][1] + steps[e][1] * t;
        double fv = std::max(0.0, to_double(h[0]) * x + to_double(h[1]) * y - to_double(c));
        boundary += fv * ws.v.eval_double({x, y}) / m;
      }
    }
    CHECK(exact == Catch::Approx(2 * boundary - interior).margin(5e-3));
  }
}
