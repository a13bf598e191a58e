#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kstab/linalg.hpp"
#include "kstab/polynomial.hpp"
#include "kstab/scalar.hpp"

namespace kstab {

/// Compact convex polytope P = {x : L_j(x) >= 0} with labelled facets.
/// Instances built by build_polytope carry primitive integer normals; clip
/// results may carry arbitrary rational labels and are used for integration
/// only.  Immutable after construction.
template <class S>
struct Polytope {
  int dim = 0;
  std::vector<AffineFunc<S>> labels;
  /// Primitive integer normal per label; empty for non-lattice labels
  /// introduced by clipping.
  std::vector<std::vector<long long>> lattice_normals;
  std::vector<Vec<S>> vertices;
  /// Per-label indices of vertices where that label vanishes.
  std::vector<std::vector<int>> facet_vertices;
  /// Per-vertex indices of labels active there.
  std::vector<std::vector<int>> vertex_labels;

  bool empty() const { return vertices.empty(); }
};

namespace detail {

template <class S>
bool points_equal(const Vec<S>& a, const Vec<S>& b) {
  const S tol = ScalarTraits<S>::feasibility_tol();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (abs_value(S(a[i] - b[i])) > tol) return false;
  return true;
}

template <class S>
int affine_dim(const std::vector<Vec<S>>& pts) {
  if (pts.empty()) return -1;
  if (pts.size() == 1) return 0;
  Mat<S> diff(pts.size() - 1, pts[0].size());
  for (std::size_t i = 1; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts[0].size(); ++j) diff(i - 1, j) = pts[i][j] - pts[0][j];
  return static_cast<int>(rank(std::move(diff)));
}

/// All feasible intersection points of dim-subsets of label hyperplanes.
template <class S>
std::vector<Vec<S>> enumerate_vertices(int dim, const std::vector<AffineFunc<S>>& labels) {
  const S tol = ScalarTraits<S>::feasibility_tol();
  std::vector<Vec<S>> verts;
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim));
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == idx.size()) {
      Mat<S> a(idx.size(), idx.size());
      Vec<S> b(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < idx.size(); ++c) a(r, c) = labels[idx[r]].normal[c];
        b[r] = -labels[idx[r]].offset;
      }
      auto x = try_solve_square(a, b);
      if (x) {
        bool feasible = true;
        for (const auto& l : labels)
          if (l.eval(*x) < -tol) {
            feasible = false;
            break;
          }
        if (feasible) {
          bool known = false;
          for (const auto& v : verts)
            if (points_equal(v, *x)) {
              known = true;
              break;
            }
          if (!known) verts.push_back(std::move(*x));
        }
      }
      return;
    }
    for (std::size_t i = start; i + (idx.size() - depth) <= labels.size(); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return verts;
}

template <class S>
void fill_incidence(Polytope<S>& p) {
  const S tol = ScalarTraits<S>::feasibility_tol();
  p.facet_vertices.assign(p.labels.size(), {});
  p.vertex_labels.assign(p.vertices.size(), {});
  for (std::size_t v = 0; v < p.vertices.size(); ++v) {
    for (std::size_t j = 0; j < p.labels.size(); ++j) {
      if (abs_value(p.labels[j].eval(p.vertices[v])) <= tol) {
        p.facet_vertices[j].push_back(static_cast<int>(v));
        p.vertex_labels[v].push_back(static_cast<int>(j));
      }
    }
  }
}

/// Detects an unbounded direction: a nonzero d with <u_j, d> >= 0 for all j.
/// Any extreme ray of the recession cone is active on dim-1 independent
/// normals, so scanning those subsets is exhaustive once rank(u) = dim.
template <class S>
std::optional<Vec<S>> find_recession_ray(int dim, const std::vector<AffineFunc<S>>& labels) {
  auto admits = [&](const Vec<S>& d) {
    for (const auto& l : labels)
      if (dot(l.normal, d) < S(0)) return false;
    return true;
  };
  if (dim == 1) {
    for (Vec<S> d : {Vec<S>{S(1)}, Vec<S>{S(-1)}})
      if (admits(d)) return d;
    return std::nullopt;
  }
  std::optional<Vec<S>> found;
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim - 1));
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (found) return;
    if (depth == idx.size()) {
      Mat<S> a(idx.size(), static_cast<std::size_t>(dim));
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < static_cast<std::size_t>(dim); ++c)
          a(r, c) = labels[idx[r]].normal[c];
      auto ker = kernel_basis(std::move(a));
      if (ker.size() == 1) {
        if (admits(ker[0])) {
          found = ker[0];
        } else {
          Vec<S> neg = vec_scale(S(-1), ker[0]);
          if (admits(neg)) found = neg;
        }
      }
      return;
    }
    for (std::size_t i = start; i + (idx.size() - depth) <= labels.size(); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return found;
}

inline long long gcd_ll(long long a, long long b) {
  a = a < 0 ? -a : a;
  b = b < 0 ? -b : b;
  while (b) {
    long long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace detail

/// Builds a validated labelled polytope from integer facet normals and
/// offsets.  Normals are reduced to primitive vectors (offsets rescaled
/// accordingly).  Throws on unbounded or lower-dimensional input and on
/// redundant labels, naming the offending index.
template <class S>
Polytope<S> build_polytope(const std::vector<std::vector<long long>>& normals,
                           const std::vector<S>& offsets) {
  if (normals.empty() || normals.size() != offsets.size())
    throw Error("build_polytope: normals and offsets must have equal nonzero length");
  const int dim = static_cast<int>(normals[0].size());
  if (dim < 1 || dim > kMaxVars)
    throw Error("build_polytope: dimension must be between 1 and " + std::to_string(kMaxVars));
  if (normals.size() < static_cast<std::size_t>(dim) + 1)
    throw Error("build_polytope: need at least dim+1 labels");

  Polytope<S> p;
  p.dim = dim;
  for (std::size_t j = 0; j < normals.size(); ++j) {
    if (static_cast<int>(normals[j].size()) != dim)
      throw Error("build_polytope: normal " + std::to_string(j) + " has wrong dimension");
    long long g = 0;
    for (long long u : normals[j]) g = detail::gcd_ll(g, u);
    if (g == 0) throw Error("build_polytope: normal " + std::to_string(j) + " is zero");
    std::vector<long long> prim(normals[j]);
    Vec<S> n(static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < prim.size(); ++i) {
      prim[i] /= g;
      n[i] = scalar_from_long<S>(prim[i]);
    }
    p.lattice_normals.push_back(std::move(prim));
    p.labels.emplace_back(std::move(n), S(offsets[j] / scalar_from_long<S>(g)));
  }

  {
    Mat<S> nm(p.labels.size(), static_cast<std::size_t>(dim));
    for (std::size_t j = 0; j < p.labels.size(); ++j)
      for (int i = 0; i < dim; ++i)
        nm(j, static_cast<std::size_t>(i)) = p.labels[j].normal[static_cast<std::size_t>(i)];
    if (static_cast<int>(rank(std::move(nm))) < dim)
      throw Error("build_polytope: normals do not span; polytope is unbounded or degenerate");
  }
  if (auto ray = detail::find_recession_ray(dim, p.labels)) {
    std::ostringstream os;
    os << "build_polytope: unbounded along direction (";
    for (std::size_t i = 0; i < ray->size(); ++i)
      os << (i ? ", " : "") << to_double((*ray)[i]);
    os << ")";
    throw Error(os.str());
  }

  p.vertices = detail::enumerate_vertices(dim, p.labels);
  if (p.vertices.empty()) throw Error("build_polytope: feasible region is empty");

  {
    Vec<S> mean(static_cast<std::size_t>(dim), S(0));
    for (const auto& v : p.vertices) mean = vec_add(mean, v);
    S inv = S(1) / scalar_from_long<S>(static_cast<long long>(p.vertices.size()));
    mean = vec_scale(inv, mean);
    for (std::size_t j = 0; j < p.labels.size(); ++j)
      if (!(p.labels[j].eval(mean) > ScalarTraits<S>::feasibility_tol()))
        throw Error("build_polytope: empty interior (label " + std::to_string(j) +
                    " active on all of P)");
  }

  detail::fill_incidence(p);

  for (std::size_t j = 0; j < p.labels.size(); ++j) {
    std::vector<Vec<S>> active;
    for (int v : p.facet_vertices[j]) active.push_back(p.vertices[static_cast<std::size_t>(v)]);
    if (detail::affine_dim(active) < dim - 1)
      throw Error("build_polytope: label " + std::to_string(j) +
                  " is redundant (does not support a facet)");
    for (std::size_t k = j + 1; k < p.labels.size(); ++k)
      if (p.lattice_normals[j] == p.lattice_normals[k] &&
          p.labels[j].offset == p.labels[k].offset)
        throw Error("build_polytope: label " + std::to_string(k) + " duplicates label " +
                    std::to_string(j));
  }
  return p;
}

/// One Delzant violation: a vertex where the active primitive normals do not
/// form a lattice basis (or where the polytope fails to be simple).
struct DelzantIssue {
  std::vector<double> vertex;
  std::vector<int> active_labels;
  long long abs_det = -1;  // -1 when the vertex is not simple
  std::string message;
};

struct DelzantReport {
  bool delzant = false;
  std::vector<DelzantIssue> issues;
};

/// Checks the Delzant condition at every vertex: exactly dim active facets
/// whose primitive normals have determinant +-1.
template <class S>
DelzantReport check_delzant(const Polytope<S>& p) {
  DelzantReport rep;
  for (const auto& ln : p.lattice_normals)
    if (ln.empty()) throw Error("check_delzant: polytope carries non-lattice labels");
  rep.delzant = true;
  for (std::size_t v = 0; v < p.vertices.size(); ++v) {
    const auto& act = p.vertex_labels[v];
    DelzantIssue issue;
    for (const S& c : p.vertices[v]) issue.vertex.push_back(to_double(c));
    issue.active_labels = act;
    if (static_cast<int>(act.size()) != p.dim) {
      std::ostringstream os;
      os << "vertex " << v << ": " << act.size() << " facets meet (expected " << p.dim << ")";
      issue.message = os.str();
      rep.issues.push_back(std::move(issue));
      rep.delzant = false;
      continue;
    }
    Mat<Rational> nm(act.size(), act.size());
    for (std::size_t r = 0; r < act.size(); ++r)
      for (std::size_t c = 0; c < act.size(); ++c)
        nm(r, c) = Rational(p.lattice_normals[static_cast<std::size_t>(act[r])][c]);
    Rational det = determinant(std::move(nm));
    Rational ad = det < 0 ? Rational(-det) : det;
    if (ad != 1) {
      issue.abs_det = ad.template convert_to<long long>();
      std::ostringstream os;
      os << "vertex " << v << ": facets {";
      for (std::size_t i = 0; i < act.size(); ++i) os << (i ? "," : "") << act[i];
      os << "} have |det| = " << issue.abs_det;
      issue.message = os.str();
      rep.issues.push_back(std::move(issue));
      rep.delzant = false;
    }
  }
  return rep;
}

/// Intersects with the halfspace {<h, x> >= c}.  The result keeps the
/// original labels (same indices) and appends the cut as a final label; it is
/// intended for integration and may be empty or lower-dimensional.
template <class S>
Polytope<S> clip(const Polytope<S>& p, const Vec<S>& h, const S& c) {
  if (static_cast<int>(h.size()) != p.dim) throw Error("clip: direction dimension mismatch");
  bool zero = true;
  for (const S& v : h)
    if (v != S(0)) zero = false;
  if (zero) throw Error("clip: zero direction");
  Polytope<S> q;
  q.dim = p.dim;
  q.labels = p.labels;
  q.labels.emplace_back(h, S(-c));
  q.lattice_normals = p.lattice_normals;
  q.lattice_normals.emplace_back();
  q.vertices = detail::enumerate_vertices(p.dim, q.labels);
  detail::fill_incidence(q);
  return q;
}

namespace detail {

template <class S>
std::vector<Vec<S>> face_points(const Polytope<S>& p, const std::vector<int>& face) {
  std::vector<Vec<S>> pts;
  pts.reserve(face.size());
  for (int v : face) pts.push_back(p.vertices[static_cast<std::size_t>(v)]);
  return pts;
}

/// Recursive fan triangulation of a d-dimensional face given by its vertex
/// indices (sorted).  Cones the first vertex over the subfaces that avoid it;
/// subfaces are intersections with label hyperplanes, deduplicated by vertex
/// set (clip regions may carry repeated or slack labels).
template <class S>
std::vector<std::vector<int>> tri_face(const Polytope<S>& p, const std::vector<int>& face,
                                       int d) {
  if (d == 0) return {{face[0]}};
  if (d == 1) {
    // Extreme pair of a collinear vertex set: spread along the widest axis.
    auto pts = face_points(p, face);
    int axis = 0;
    S spread(0);
    for (int i = 0; i < p.dim; ++i) {
      S lo = pts[0][static_cast<std::size_t>(i)], hi = lo;
      for (const auto& q : pts) {
        lo = std::min(lo, q[static_cast<std::size_t>(i)]);
        hi = std::max(hi, q[static_cast<std::size_t>(i)]);
      }
      if (hi - lo > spread) {
        spread = hi - lo;
        axis = i;
      }
    }
    int lo_idx = face[0], hi_idx = face[0];
    for (int v : face) {
      const auto& q = p.vertices[static_cast<std::size_t>(v)];
      if (q[static_cast<std::size_t>(axis)] <
          p.vertices[static_cast<std::size_t>(lo_idx)][static_cast<std::size_t>(axis)])
        lo_idx = v;
      if (q[static_cast<std::size_t>(axis)] >
          p.vertices[static_cast<std::size_t>(hi_idx)][static_cast<std::size_t>(axis)])
        hi_idx = v;
    }
    return {{lo_idx, hi_idx}};
  }
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> subs;
  for (std::size_t j = 0; j < p.labels.size(); ++j) {
    std::vector<int> inter;
    std::set_intersection(face.begin(), face.end(), p.facet_vertices[j].begin(),
                          p.facet_vertices[j].end(), std::back_inserter(inter));
    if (inter.empty()) continue;
    if (affine_dim(face_points(p, inter)) != d - 1) continue;
    if (seen.insert(inter).second) subs.push_back(std::move(inter));
  }
  const int apex = face[0];
  std::vector<std::vector<int>> simplices;
  for (const auto& sub : subs) {
    if (std::binary_search(sub.begin(), sub.end(), apex)) continue;
    for (auto s : tri_face(p, sub, d - 1)) {
      s.push_back(apex);
      simplices.push_back(std::move(s));
    }
  }
  return simplices;
}

}  // namespace detail

/// Fan triangulation of the solid polytope.  Returns simplices as (dim+1)
/// point tuples; empty when the region is empty or lower-dimensional.
template <class S>
std::vector<std::vector<Vec<S>>> triangulate(const Polytope<S>& p) {
  std::vector<std::vector<Vec<S>>> out;
  if (p.vertices.empty()) return out;
  std::vector<int> all(p.vertices.size());
  std::iota(all.begin(), all.end(), 0);
  if (detail::affine_dim(detail::face_points(p, all)) < p.dim) return out;
  for (const auto& s : detail::tri_face(p, all, p.dim))
    out.push_back(detail::face_points(p, s));
  return out;
}

/// Triangulation of the facet supported by label j into (dim)-point simplices
/// in ambient coordinates; empty when the facet is empty or degenerate.
template <class S>
std::vector<std::vector<Vec<S>>> triangulate_facet(const Polytope<S>& p, std::size_t j) {
  std::vector<std::vector<Vec<S>>> out;
  if (j >= p.labels.size()) throw Error("triangulate_facet: label index out of range");
  const auto& face = p.facet_vertices[j];
  if (face.empty()) return out;
  if (detail::affine_dim(detail::face_points(p, face)) != p.dim - 1) return out;
  for (const auto& s : detail::tri_face(p, face, p.dim - 1))
    out.push_back(detail::face_points(p, s));
  return out;
}

/// dim! * volume of the simplex spanned by pts (dim+1 points).
template <class S>
S simplex_det(const std::vector<Vec<S>>& pts) {
  const std::size_t d = pts.size() - 1;
  Mat<S> m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = pts[i + 1][j] - pts[0][j];
  return determinant(std::move(m));
}

/// Lebesgue barycenter, exact in rational mode.
template <class S>
Vec<S> barycenter(const Polytope<S>& p) {
  auto simplices = triangulate(p);
  if (simplices.empty()) throw Error("barycenter: region has no volume");
  Vec<S> acc(static_cast<std::size_t>(p.dim), S(0));
  S total(0);
  const S invd1 = S(1) / scalar_from_long<S>(p.dim + 1);
  for (const auto& s : simplices) {
    S w = abs_value(simplex_det(s));
    total += w;
    Vec<S> centroid(static_cast<std::size_t>(p.dim), S(0));
    for (const auto& v : s) centroid = vec_add(centroid, v);
    acc = vec_add(acc, vec_scale(S(w * invd1), centroid));
  }
  if (total == S(0)) throw Error("barycenter: region has no volume");
  return vec_scale(S(S(1) / total), acc);
}

template <class S>
std::pair<Vec<S>, Vec<S>> bounding_box(const Polytope<S>& p) {
  if (p.vertices.empty()) throw Error("bounding_box: empty region");
  Vec<S> lo = p.vertices[0], hi = p.vertices[0];
  for (const auto& v : p.vertices)
    for (std::size_t i = 0; i < v.size(); ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  return {lo, hi};
}

template <class S>
bool contains(const Polytope<S>& p, const Vec<S>& x) {
  const S tol = ScalarTraits<S>::feasibility_tol();
  for (const auto& l : p.labels)
    if (l.eval(x) < -tol) return false;
  return true;
}

}  // namespace kstab
