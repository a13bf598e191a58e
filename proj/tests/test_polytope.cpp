#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "kstab/polytope.hpp"

using kstab::build_polytope;
using kstab::Polytope;
using kstab::Rational;
using kstab::Vec;

namespace {

Polytope<Rational> unit_interval() {
  return build_polytope<Rational>({{1}, {-1}}, {Rational(0), Rational(1)});
}

Polytope<Rational> simplex2() {
  return build_polytope<Rational>({{1, 0}, {0, 1}, {-1, -1}},
                                  {Rational(0), Rational(0), Rational(1)});
}

Polytope<Rational> unit_square() {
  return build_polytope<Rational>({{1, 0}, {0, 1}, {-1, 0}, {0, -1}},
                                  {Rational(0), Rational(0), Rational(1), Rational(1)});
}

bool has_vertex(const Polytope<Rational>& p, const Vec<Rational>& v) {
  return std::any_of(p.vertices.begin(), p.vertices.end(), [&](const Vec<Rational>& w) {
    return w == v;
  });
}

}  // namespace

TEST_CASE("interval and simplex vertex enumeration", "[polytope]") {
  auto iv = unit_interval();
  REQUIRE(iv.vertices.size() == 2);
  CHECK(has_vertex(iv, {Rational(0)}));
  CHECK(has_vertex(iv, {Rational(1)}));

  auto s = simplex2();
  REQUIRE(s.vertices.size() == 3);
  CHECK(has_vertex(s, {Rational(0), Rational(0)}));
  CHECK(has_vertex(s, {Rational(1), Rational(0)}));
  CHECK(has_vertex(s, {Rational(0), Rational(1)}));
}

TEST_CASE("labels reduce to primitive normals with rescaled offsets", "[polytope]") {
  auto p = build_polytope<Rational>({{2}, {-1}}, {Rational(0), Rational(1)});
  CHECK(p.lattice_normals[0] == std::vector<long long>{1});
  CHECK(p.labels[0].offset == Rational(0));
  auto q = build_polytope<Rational>({{3}, {-1}}, {Rational(2), Rational(1)});
  CHECK(q.lattice_normals[0] == std::vector<long long>{1});
  CHECK(q.labels[0].offset == Rational(2, 3));
}

TEST_CASE("rescaling a label before reduction yields the same polytope", "[polytope]") {
  auto a = simplex2();
  auto b = build_polytope<Rational>({{3, 0}, {0, 1}, {-1, -1}},
                                    {Rational(0), Rational(0), Rational(1)});
  REQUIRE(a.labels.size() == b.labels.size());
  for (std::size_t j = 0; j < a.labels.size(); ++j) {
    CHECK(a.lattice_normals[j] == b.lattice_normals[j]);
    CHECK(a.labels[j].offset == b.labels[j].offset);
  }
  CHECK(a.vertices == b.vertices);
}

TEST_CASE("delzant check passes on standard fixtures", "[polytope]") {
  CHECK(kstab::check_delzant(unit_interval()).delzant);
  CHECK(kstab::check_delzant(simplex2()).delzant);
  CHECK(kstab::check_delzant(unit_square()).delzant);
}

TEST_CASE("delzant check reports the offending vertex and determinant", "[polytope]") {
  auto p = build_polytope<Rational>({{1, 0}, {0, 1}, {-1, -2}},
                                    {Rational(0), Rational(0), Rational(1)});
  auto rep = kstab::check_delzant(p);
  REQUIRE_FALSE(rep.delzant);
  REQUIRE(rep.issues.size() == 1);
  const auto& issue = rep.issues[0];
  CHECK(issue.abs_det == 2);
  // Oracle: the bad vertex solves x = 0, -x - 2y + 1 = 0, so (0, 1/2).
  CHECK(issue.vertex[0] == Catch::Approx(0.0));
  CHECK(issue.vertex[1] == Catch::Approx(0.5));
  CHECK(issue.active_labels == std::vector<int>{0, 2});
}

TEST_CASE("construction errors carry the failing label", "[polytope]") {
  using Catch::Matchers::ContainsSubstring;
  // Unbounded: no label caps x from above.
  CHECK_THROWS_WITH((build_polytope<Rational>({{1}, {1}}, {Rational(0), Rational(1)})),
                    ContainsSubstring("unbounded"));
  // Redundant: x <= 2 never supports a facet of [0,1].
  CHECK_THROWS_WITH(
      (build_polytope<Rational>({{1}, {-1}, {-1}}, {Rational(0), Rational(1), Rational(2)})),
      ContainsSubstring("redundant"));
  // Empty interior: the two halfspaces meet in the single point {0}.
  CHECK_THROWS_WITH((build_polytope<Rational>({{1}, {-1}}, {Rational(0), Rational(0)})),
                    ContainsSubstring("empty interior"));
  // Duplicate labels.
  CHECK_THROWS_WITH((build_polytope<Rational>({{1, 0}, {0, 1}, {-1, -1}, {1, 0}},
                                              {Rational(0), Rational(0), Rational(1), Rational(0)})),
                    ContainsSubstring("label"));
  // Dimension cap.
  CHECK_THROWS((build_polytope<Rational>(
      {{1, 0, 0, 0, 0}, {0, 1, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 0, 0, 1},
       {-1, -1, -1, -1, -1}},
      {Rational(0), Rational(0), Rational(0), Rational(0), Rational(0), Rational(1)})));
}

TEST_CASE("clip keeps label order and finds the cut polygon", "[polytope]") {
  auto s = simplex2();
  auto c = kstab::clip(s, {Rational(1), Rational(1)}, Rational(1, 2));
  CHECK(c.labels.size() == 4);
  REQUIRE(c.vertices.size() == 4);
  CHECK(has_vertex(c, {Rational(1, 2), Rational(0)}));
  CHECK(has_vertex(c, {Rational(1), Rational(0)}));
  CHECK(has_vertex(c, {Rational(0), Rational(1)}));
  CHECK(has_vertex(c, {Rational(0), Rational(1, 2)}));

  // Clipping everything away leaves an empty region.
  auto gone = kstab::clip(s, {Rational(1), Rational(1)}, Rational(5));
  CHECK(gone.empty());
}

TEST_CASE("barycenters of reference bodies", "[polytope]") {
  auto b1 = kstab::barycenter(unit_interval());
  CHECK(b1[0] == Rational(1, 2));
  auto b2 = kstab::barycenter(simplex2());
  CHECK(b2[0] == Rational(1, 3));
  CHECK(b2[1] == Rational(1, 3));
  auto b3 = kstab::barycenter(unit_square());
  CHECK(b3[0] == Rational(1, 2));
  CHECK(b3[1] == Rational(1, 2));
}

TEST_CASE("polygon facet incidence counts match Euler's relation", "[polytope]") {
  for (const auto& p : {simplex2(), unit_square()}) {
    // Every polygon facet carries exactly two vertices, and V = E.
    std::size_t edge_ends = 0;
    for (const auto& fv : p.facet_vertices) {
      CHECK(fv.size() == 2);
      edge_ends += fv.size();
    }
    CHECK(edge_ends == 2 * p.vertices.size());
  }
}

TEST_CASE("triangulation tiles the polytope", "[polytope]") {
  auto s = unit_square();
  auto tris = kstab::triangulate(s);
  Rational total(0);
  for (const auto& t : tris) total += kstab::abs_value(kstab::simplex_det(t));
  CHECK(total == Rational(2));  // 2! * area

  auto hex = build_polytope<Rational>({{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {-1, -1}, {1, 1}},
                                      {Rational(0), Rational(0), Rational(2), Rational(2),
                                       Rational(3), Rational(-1)});
  Rational areax2(0);
  for (const auto& t : kstab::triangulate(hex)) areax2 += kstab::abs_value(kstab::simplex_det(t));
  // Oracle via shoelace on (1,0),(2,0),(2,1),(1,2),(0,2),(0,1): area = 3.
  CHECK(areax2 == Rational(6));
}

TEST_CASE("three dimensional cube triangulates to full volume", "[polytope]") {
  auto cube = build_polytope<Rational>(
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}},
      {Rational(0), Rational(0), Rational(0), Rational(1), Rational(1), Rational(1)});
  Rational total(0);
  for (const auto& t : kstab::triangulate(cube)) total += kstab::abs_value(kstab::simplex_det(t));
  CHECK(total == Rational(6));  // 3! * volume
  CHECK(kstab::check_delzant(cube).delzant);
}
