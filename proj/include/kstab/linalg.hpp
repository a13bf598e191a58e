#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "kstab/scalar.hpp"

namespace kstab {

/// Minimal dense matrix; the sizes here are tiny (constraint systems of a few
/// hundred rows at most), so clarity wins over blocking or expression trees.
template <class S>
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, S(0)) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  S& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  Mat transposed() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols_ != b.rows_) throw Error("Mat: product size mismatch");
    Mat r(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        if (a(i, k) == S(0)) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) r(i, j) += a(i, k) * b(k, j);
      }
    return r;
  }

  Vec<S> apply(const Vec<S>& x) const {
    if (x.size() != cols_) throw Error("Mat: apply size mismatch");
    Vec<S> y(rows_, S(0));
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<S> a_;
};

namespace detail {
// Pivot choice: any nonzero entry is exact for rational scalars; taking the
// one of largest magnitude keeps intermediate numerators small and doubles
// stable.
template <class S>
std::size_t pick_pivot(const Mat<S>& m, std::size_t col, std::size_t from) {
  std::size_t best = m.rows();
  double best_mag = 0;
  for (std::size_t i = from; i < m.rows(); ++i) {
    if (m(i, col) == S(0)) continue;
    double mag = std::fabs(to_double(m(i, col)));
    if (best == m.rows() || mag > best_mag) {
      best = i;
      best_mag = mag;
    }
  }
  return best;  // == rows() when the column is zero below `from`
}

template <class S>
void swap_rows(Mat<S>& m, std::size_t a, std::size_t b) {
  if (a == b) return;
  for (std::size_t j = 0; j < m.cols(); ++j) std::swap(m(a, j), m(b, j));
}
}  // namespace detail

/// Reduced row echelon form in place; returns the pivot column per pivot row.
template <class S>
std::vector<std::size_t> rref(Mat<S>& m) {
  std::vector<std::size_t> pivots;
  std::size_t row = 0;
  for (std::size_t col = 0; col < m.cols() && row < m.rows(); ++col) {
    std::size_t p = detail::pick_pivot(m, col, row);
    if (p == m.rows()) continue;
    detail::swap_rows(m, p, row);
    S inv = S(1) / m(row, col);
    for (std::size_t j = col; j < m.cols(); ++j) m(row, j) = m(row, j) * inv;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (i == row || m(i, col) == S(0)) continue;
      S f = m(i, col);
      for (std::size_t j = col; j < m.cols(); ++j) m(i, j) -= f * m(row, j);
    }
    pivots.push_back(col);
    ++row;
  }
  return pivots;
}

/// Solves a square system exactly; throws on singular input.
template <class S>
Vec<S> solve_square(Mat<S> a, Vec<S> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw Error("solve_square: shape mismatch");
  Mat<S> aug(n, n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
    aug(i, n) = b[i];
  }
  auto pivots = rref(aug);
  if (pivots.size() != n) throw Error("solve_square: singular matrix");
  Vec<S> x(n, S(0));
  for (std::size_t i = 0; i < n; ++i) x[i] = aug(i, n);
  return x;
}

template <class S>
std::optional<Vec<S>> try_solve_square(const Mat<S>& a, const Vec<S>& b) {
  try {
    return solve_square(a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

template <class S>
S determinant(Mat<S> m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw Error("determinant: not square");
  S det(1);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t p = detail::pick_pivot(m, col, col);
    if (p == n) return S(0);
    if (p != col) {
      detail::swap_rows(m, p, col);
      det = -det;
    }
    det *= m(col, col);
    S inv = S(1) / m(col, col);
    for (std::size_t i = col + 1; i < n; ++i) {
      if (m(i, col) == S(0)) continue;
      S f = m(i, col) * inv;
      for (std::size_t j = col; j < n; ++j) m(i, j) -= f * m(col, j);
    }
  }
  return det;
}

template <class S>
std::size_t rank(Mat<S> m) {
  return rref(m).size();
}

/// Kernel basis of a (possibly rectangular) matrix, one vector per free column.
template <class S>
std::vector<Vec<S>> kernel_basis(Mat<S> m) {
  const std::size_t n = m.cols();
  auto pivots = rref(m);
  std::vector<bool> is_pivot(n, false);
  for (auto c : pivots) is_pivot[c] = true;
  std::vector<Vec<S>> basis;
  for (std::size_t free = 0; free < n; ++free) {
    if (is_pivot[free]) continue;
    Vec<S> v(n, S(0));
    v[free] = S(1);
    for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -m(r, free);
    basis.push_back(std::move(v));
  }
  return basis;
}

struct LinearSolveStats {
  std::size_t rank = 0;
  bool consistent = false;
};

/// Particular solution of A x = b (consistency checked exactly) together with
/// a kernel basis; empty optional when the system is inconsistent.
template <class S>
std::optional<Vec<S>> solve_particular(const Mat<S>& a, const Vec<S>& b,
                                       std::vector<Vec<S>>* kernel_out = nullptr,
                                       LinearSolveStats* stats = nullptr) {
  const std::size_t rows = a.rows(), cols = a.cols();
  Mat<S> aug(rows, cols + 1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) aug(i, j) = a(i, j);
    aug(i, cols) = b[i];
  }
  auto pivots = rref(aug);
  bool consistent = true;
  for (auto c : pivots)
    if (c == cols) consistent = false;
  if (stats) {
    stats->rank = pivots.size() - (consistent ? 0 : 1);
    stats->consistent = consistent;
  }
  if (!consistent) return std::nullopt;
  Vec<S> x(cols, S(0));
  for (std::size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = aug(r, cols);
  if (kernel_out) {
    std::vector<bool> is_pivot(cols, false);
    for (auto c : pivots) is_pivot[c] = true;
    kernel_out->clear();
    for (std::size_t free = 0; free < cols; ++free) {
      if (is_pivot[free]) continue;
      Vec<S> v(cols, S(0));
      v[free] = S(1);
      for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -aug(r, free);
      kernel_out->push_back(std::move(v));
    }
  }
  return x;
}

/// Minimum-Euclidean-norm solution of a consistent system: project the
/// particular solution onto the orthogonal complement of the kernel.
template <class S>
std::optional<Vec<S>> solve_least_norm(const Mat<S>& a, const Vec<S>& b,
                                       std::vector<Vec<S>>* kernel_out = nullptr) {
  std::vector<Vec<S>> kernel;
  auto xp = solve_particular(a, b, &kernel);
  if (!xp) return std::nullopt;
  if (!kernel.empty()) {
    const std::size_t k = kernel.size();
    Mat<S> gram(k, k);
    Vec<S> rhs(k, S(0));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) gram(i, j) = dot(kernel[i], kernel[j]);
      rhs[i] = dot(kernel[i], *xp);
    }
    Vec<S> coef = solve_square(gram, rhs);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < xp->size(); ++j) (*xp)[j] -= coef[i] * kernel[i][j];
  }
  if (kernel_out) *kernel_out = std::move(kernel);
  return xp;
}

/// Sylvester's criterion: exact positive-definiteness test for symmetric
/// matrices via leading principal minors.
template <class S>
bool is_positive_definite(const Mat<S>& m) {
  const std::size_t n = m.rows();
  for (std::size_t k = 1; k <= n; ++k) {
    Mat<S> lead(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) lead(i, j) = m(i, j);
    if (!(determinant(lead) > S(0))) return false;
  }
  return true;
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Mat<double> m) {
  const std::size_t n = m.rows();
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(m(p, q)) < 1e-300) continue;
        double theta = (m(q, q) - m(p, p)) / (2 * m(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1));
        double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = m(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

/// Condition number estimate (2-norm) of a square matrix after conversion to
/// double; used only for diagnostics on exactly solvable systems.
template <class S>
double condition_estimate(const Mat<S>& a) {
  const std::size_t n = a.rows();
  Mat<double> ata(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += to_double(a(k, i)) * to_double(a(k, j));
      ata(i, j) = acc;
    }
  auto eig = symmetric_eigenvalues(ata);
  if (eig.front() <= 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(eig.back() / eig.front());
}

}  // namespace kstab
