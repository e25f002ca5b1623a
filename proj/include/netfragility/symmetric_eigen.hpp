#pragma once

// Dense symmetric eigendecomposition: Householder reduction to tridiagonal
// form followed by the implicit QL algorithm with Wilkinson-style shifts.
// Follows the classic tred2/tql2 formulation (EISPACK, JAMA).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "netfragility/errors.hpp"
#include "netfragility/matrix.hpp"

namespace netfragility {

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column k pairs with values[k]; empty when not requested
};

namespace detail {

// Householder tridiagonalization. On entry v holds the symmetric input; on
// exit v holds the orthogonal transform, d the diagonal and e the
// sub-diagonal (e[0] = 0).
inline void tridiagonalize(Matrix& v, Vector& d, Vector& e) {
  const std::size_t n = v.rows();
  for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (std::size_t k = j + 1; k + 1 <= i; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k + 1 <= i; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  // Accumulate the transformations.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e). Rotations are applied to v only
// when with_vectors is set.
inline void tridiagonal_ql(Matrix& v, Vector& d, Vector& e, bool with_vectors,
                           int max_sweeps_per_value) {
  const std::size_t n = d.size();
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  const double eps = std::numeric_limits<double>::epsilon();
  double f = 0.0;
  double tst1 = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > max_sweeps_per_value) {
          throw DomainError("symmetric eigensolver did not converge within " +
                            std::to_string(max_sweeps_per_value) +
                            " QL sweeps for eigenvalue " + std::to_string(l));
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0;
        double c2 = c;
        double c3 = c;
        const double el1 = e[l + 1];
        double s = 0.0;
        double s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          s = e[ii] / r;
          c = p / r;
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          if (with_vectors) {
            for (std::size_t k = 0; k < n; ++k) {
              h = v(k, ii + 1);
              v(k, ii + 1) = s * v(k, ii) + c * h;
              v(k, ii) = c * v(k, ii) - s * h;
            }
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace detail

// Full eigendecomposition of a symmetric matrix (asymmetry beyond 1e-12 of the
// largest entry is rejected).
// Eigenvalues ascend; each eigenvector's first component with magnitude above
// 1e-12 is made positive so serialized output is reproducible.
inline SymmetricEigen symmetric_eigen(const Matrix& a, bool with_vectors = true,
                                      int max_sweeps_per_value = 60) {
  if (!a.is_square()) throw DomainError("symmetric_eigen: matrix is not square");
  const std::size_t n = a.rows();
  SymmetricEigen out;
  if (n == 0) return out;
  double scale = 0.0, skew = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      scale = std::max(scale, std::abs(a(i, j)));
      skew = std::max(skew, std::abs(a(i, j) - a(j, i)));
    }
  if (skew > 1e-12 * scale) throw DomainError("symmetric_eigen: matrix is not symmetric");
  if (n == 1) {
    out.values = {a(0, 0)};
    if (with_vectors) out.vectors = Matrix::identity(1);
    return out;
  }

  Matrix v = a;
  Vector d(n), e(n);
  detail::tridiagonalize(v, d, e);
  detail::tridiagonal_ql(v, d, e, with_vectors, max_sweeps_per_value);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });

  out.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.values[k] = d[order[k]];

  if (with_vectors) {
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t src = order[k];
      double sign = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(v(i, src)) > 1e-12) {
          sign = v(i, src) < 0 ? -1.0 : 1.0;
          break;
        }
      }
      for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = sign * v(i, src);
    }
  }
  return out;
}

}  // namespace netfragility
