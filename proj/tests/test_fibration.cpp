#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kstab/fibration.hpp"

using kstab::CertifyVerdict;
using kstab::Error;
using kstab::Exponents;
using kstab::FibrationData;
using kstab::FibrationScenario;
using kstab::Polynomial;
using kstab::Polytope;
using kstab::Rational;
using kstab::ScanOptions;
using kstab::build_polytope;
using kstab::build_weight_system;
using kstab::calabi_dream_check;
using kstab::certificate_hash;
using kstab::certify;
using kstab::curve_factor;
using kstab::curve_scal;
using kstab::guillemin_potential;
using kstab::pi_value;
using kstab::solve_1d;
using kstab::to_double;
using kstab::total_scalar;
using kstab::total_volume_factor;
using kstab::weight_system_from_polynomials;

namespace {

Polytope<Rational> interval01() {
  return build_polytope<Rational>({{1}, {-1}}, {Rational(0), Rational(1)});
}

Polytope<Rational> simplex2() {
  return build_polytope<Rational>({{1, 0}, {0, 1}, {-1, -1}},
                                  {Rational(0), Rational(0), Rational(1)});
}

FibrationData<Rational> sphere_base_fibration() {
  FibrationData<Rational> fib;
  fib.factors.push_back({{1}, Rational(2), 1, Rational(0)});
  return fib;
}

Polynomial<Rational> poly1(std::initializer_list<Rational> coeffs) {
  Polynomial<Rational> p(1);
  int k = 0;
  for (const auto& c : coeffs) {
    Exponents e{};
    e[0] = k++;
    p.add_term(e, c);
  }
  return p;
}

FibrationScenario<Rational> twisted_simplex_scenario(int genus,
                                                     std::vector<std::vector<Rational>> sweep) {
  FibrationScenario<Rational> sc;
  sc.fiber = simplex2();
  sc.fib.factors.push_back(curve_factor<Rational>({1, 2}, Rational(1), genus, Rational(1)));
  sc.class_sweep = std::move(sweep);
  return sc;
}

}  // namespace

TEST_CASE("pi approximation supports exact curve scalars", "[fibration]") {
  Rational pi = pi_value<Rational>();
  CHECK(std::fabs(to_double(pi) - 3.14159265358979323846) <= 1e-15);

  CHECK(curve_scal(1, Rational(1)) == Rational(0));
  CHECK(curve_scal(1, Rational(7, 3)) == Rational(0));
  CHECK(curve_scal(0, Rational(4) * pi) == Rational(2));
  CHECK(curve_scal(2, Rational(1)) == Rational(-8) * pi);
  CHECK(curve_scal(3, Rational(2)) == Rational(-8) * pi);
  CHECK_THROWS_AS(curve_scal(0, Rational(0)), Error);
}

TEST_CASE("volume factor integrates the fiber weight exactly", "[fibration]") {
  auto interval = interval01();
  auto tri = simplex2();

  CHECK(total_volume_factor(interval, poly1({Rational(2), Rational(1)})) == Rational(5, 2));
  CHECK(total_volume_factor(tri, Polynomial<Rational>::constant(2, Rational(1))) ==
        Rational(1, 2));

  // x + 2y + 3 over the simplex: 1/6 + 2/6 + 3/2.
  Polynomial<Rational> vw = Polynomial<Rational>::variable(2, 0);
  vw += Rational(2) * Polynomial<Rational>::variable(2, 1);
  vw += Polynomial<Rational>::constant(2, Rational(3));
  CHECK(total_volume_factor(tri, vw) == Rational(2));

  // A two-dimensional base factor squares its affine term.
  FibrationData<Rational> fib2;
  fib2.factors.push_back({{1}, Rational(1), 2, Rational(0)});
  CHECK(total_volume_factor(interval, make_v(interval, fib2)) == Rational(7, 3));

  // Monotone in each class offset: (1 + c) / 2 on the twisted simplex.
  Rational prev(0);
  for (long long c = 1; c <= 3; ++c) {
    FibrationData<Rational> fib;
    fib.factors.push_back({{1, 2}, Rational(c), 1, Rational(0)});
    Rational vol = total_volume_factor(tri, make_v(tri, fib));
    CHECK(vol == Rational(1 + c, 2));
    CHECK(vol > prev);
    prev = vol;
  }
}

TEST_CASE("total scalar reduces to the fiber curvature without fibration factors",
          "[fibration]") {
  auto p = interval01();
  auto ws = weight_system_from_polynomials(p, Polynomial<Rational>::constant(1, Rational(1)),
                                           poly1({Rational(4)}));
  auto u = guillemin_potential(p);
  FibrationData<Rational> none;

  auto report = total_scalar(none, ws, u, {{0.25}, {0.5}, {0.75}});
  REQUIRE(report.values.size() == 3);
  for (double value : report.values) CHECK(value == Catch::Approx(4.0).margin(1e-12));
  CHECK(!report.deviation.has_value());
}

TEST_CASE("total scalar over a sphere base matches the closed form", "[fibration]") {
  auto p = interval01();
  auto u = guillemin_potential(p);
  std::vector<std::vector<double>> probes{{0.125}, {0.5}, {0.875}};

  auto fib = sphere_base_fibration();
  auto ws = build_weight_system(p, fib);
  auto report = total_scalar(fib, ws, u, probes);
  REQUIRE(report.values.size() == 3);
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double x = probes[k][0];
    CHECK(report.values[k] == Catch::Approx((12 * x + 4) / (x + 2)).margin(1e-12));
  }
  REQUIRE(report.deviation.has_value());

  // A nonzero base scalar shifts the total by scal / (x + c).
  FibrationData<Rational> curved;
  curved.factors.push_back({{1}, Rational(2), 1, Rational(2)});
  auto ws2 = build_weight_system(p, curved);
  auto report2 = total_scalar(curved, ws2, u, probes);
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double x = probes[k][0];
    CHECK(report2.values[k] == Catch::Approx((12 * x + 6) / (x + 2)).margin(1e-12));
  }
}

TEST_CASE("total scalar of the solved potential stays near the extremal function",
          "[fibration]") {
  auto p = interval01();
  auto fib = sphere_base_fibration();
  auto ws = build_weight_system(p, fib);
  auto report1d = solve_1d(p, ws);
  REQUIRE(report1d.u_recovered.has_value());

  std::vector<std::vector<double>> probes;
  for (int k = 2; k <= 14; ++k) probes.push_back({k / 16.0});
  auto report = total_scalar(fib, ws, *report1d.u_recovered, probes);
  REQUIRE(report.deviation.has_value());
  CHECK(*report.deviation <= 2e-2);  // O(h^2) truncation of the FD route
}

TEST_CASE("total scalar validates probes", "[fibration]") {
  auto p = interval01();
  auto fib = sphere_base_fibration();
  auto ws = build_weight_system(p, fib);

  auto u0 = guillemin_potential(p);
  CHECK_THROWS_AS(total_scalar(fib, ws, u0, {{0.0}}), Error);
  CHECK_THROWS_AS(total_scalar(fib, ws, u0, {{0.5, 0.5}}), Error);

  auto report1d = solve_1d(p, ws);
  REQUIRE(report1d.u_recovered.has_value());
  CHECK_THROWS_AS(total_scalar(fib, ws, *report1d.u_recovered, {{0.003}}), Error);
}

TEST_CASE("certificate hashes fingerprint positive certificates", "[fibration]") {
  ScanOptions light;
  light.directions = 16;
  light.offsets = 12;
  light.refine_top = 1;

  auto interval = interval01();
  auto fib1 = sphere_base_fibration();
  auto ws1 = build_weight_system(interval, fib1);
  auto res1 = certify(interval, ws1, light);
  auto res1again = certify(interval, ws1, light);
  REQUIRE(res1.verdict == CertifyVerdict::kExists);
  CHECK(!certificate_hash(res1).empty());
  CHECK(certificate_hash(res1) == certificate_hash(res1again));

  auto tri = simplex2();
  FibrationData<Rational> twist;
  twist.factors.push_back({{1, 2}, Rational(1), 1, Rational(0)});
  auto ws2 = build_weight_system(tri, twist);
  auto res2 = certify(tri, ws2, light);
  REQUIRE(res2.verdict == CertifyVerdict::kExists);
  CHECK(!certificate_hash(res2).empty());
  CHECK(certificate_hash(res2) != certificate_hash(res1));

  // No positive certificate, no fingerprint.
  auto bad = weight_system_from_polynomials(
      interval, Polynomial<Rational>::constant(1, Rational(1)),
      poly1({Rational(36), Rational(-192), Rational(192)}));
  auto res3 = certify(interval, bad, light);
  REQUIRE(res3.verdict == CertifyVerdict::kNotStable);
  CHECK(certificate_hash(res3).empty());
}

TEST_CASE("calabi dream sweep certifies the elliptic-base twisted simplex", "[fibration]") {
  auto sc = twisted_simplex_scenario(1, {{Rational(1)}, {Rational(2)}, {Rational(5)}});
  CHECK(sc.fib.factors[0].scal == Rational(0));

  auto report = calabi_dream_check(sc);
  REQUIRE(report.classes.size() == 3);
  CHECK(report.exists == 3);
  CHECK(report.not_stable == 0);
  CHECK(report.undecided == 0);
  CHECK(!report.volume_note.empty());
  CHECK(!report.sampling_note.empty());

  for (std::size_t k = 0; k < 3; ++k) {
    const auto& cls = report.classes[k];
    CHECK(cls.verdict == CertifyVerdict::kExists);
    CHECK(cls.lambda_hat > 0.0);
    CHECK(!cls.certificate_hash.empty());
    CHECK(cls.fiber_volume == Rational(1) / Rational(2) + cls.c[0] / Rational(2));
    CHECK(!cls.destabilizer.has_value());
  }
  CHECK(report.classes[0].certificate_hash != report.classes[1].certificate_hash);
  CHECK(report.classes[1].certificate_hash != report.classes[2].certificate_hash);
}

TEST_CASE("interval bundle sweep certifies via the one-dimensional solver", "[fibration]") {
  FibrationScenario<Rational> sc;
  sc.fiber = interval01();
  sc.fib.factors.push_back(curve_factor<Rational>({1}, Rational(1), 1, Rational(1)));
  sc.class_sweep = {{Rational(2)}, {Rational(3)}};

  auto report = calabi_dream_check(sc);
  REQUIRE(report.classes.size() == 2);
  CHECK(report.exists == 2);
  for (const auto& cls : report.classes) {
    CHECK(cls.verdict == CertifyVerdict::kExists);
    CHECK(!cls.certificate_hash.empty());
  }
  CHECK(report.classes[0].certificate_hash != report.classes[1].certificate_hash);
}

TEST_CASE("big classes over a genus-three base destabilize", "[fibration]") {
  // The class grows as the fiber dominates the base, i.e. as the offset c
  // shrinks; the small-offset sweep point must lose stability.
  auto sc = twisted_simplex_scenario(3, {{Rational(1)}, {Rational(1, 10)}});
  CHECK(sc.fib.factors[0].scal == Rational(-16) * pi_value<Rational>());

  auto report = calabi_dream_check(sc);
  REQUIRE(report.classes.size() == 2);
  CHECK(report.classes[0].verdict == CertifyVerdict::kExists);
  CHECK(report.classes[1].verdict == CertifyVerdict::kNotStable);
  CHECK(report.exists == 1);
  CHECK(report.not_stable == 1);

  const auto& big = report.classes[1];
  CHECK(big.lambda_hat < 0.0);
  CHECK(big.certificate_hash.empty());
  REQUIRE(big.destabilizer.has_value());
  CHECK(big.destabilizer->futaki_value < 0.0);
}

TEST_CASE("sweep points enforce the fibration invariants", "[fibration]") {
  auto sc = twisted_simplex_scenario(1, {{Rational(0)}});
  CHECK_THROWS_AS(calabi_dream_check(sc), Error);

  auto mismatched = twisted_simplex_scenario(1, {{Rational(1), Rational(2)}});
  CHECK_THROWS_AS(calabi_dream_check(mismatched), Error);
}
