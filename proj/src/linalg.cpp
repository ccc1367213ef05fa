#include "psm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "psm/common.hpp"

namespace psm {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ValidationError("matmul: inner dimensions differ (" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix gram(const Matrix& a) {
  Matrix out(a.cols(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = a(i, p);
      if (v == 0.0) continue;
      for (std::size_t q = p; q < a.cols(); ++q) out(p, q) += v * a(i, q);
    }
  }
  for (std::size_t p = 0; p < a.cols(); ++p)
    for (std::size_t q = 0; q < p; ++q) out(p, q) = out(q, p);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("hadamard: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

double dot_all(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("dot_all: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a.data()[i] * b.data()[i];
  return sum;
}

namespace {

// In-place lower Cholesky. Returns false when a pivot is not positive.
bool cholesky(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double root = std::sqrt(d);
    a(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
      a(i, j) = v / root;
    }
  }
  return true;
}

}  // namespace

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) throw ValidationError("solve_spd: matrix not square");
  if (a.rows() != b.rows()) throw ValidationError("solve_spd: rhs row count mismatch");
  const std::size_t n = a.rows();

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  if (scale == 0.0) scale = 1.0;

  const double jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
  for (double jitter : jitters) {
    Matrix chol = a;
    for (std::size_t i = 0; i < n; ++i) chol(i, i) += jitter * scale;
    if (!cholesky(chol)) continue;

    Matrix x = b;
    // Forward substitution L y = b, then back substitution L^T x = y.
    for (std::size_t c = 0; c < b.cols(); ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        double v = x(i, c);
        for (std::size_t k = 0; k < i; ++k) v -= chol(i, k) * x(k, c);
        x(i, c) = v / chol(i, i);
      }
      for (std::size_t ii = n; ii-- > 0;) {
        double v = x(ii, c);
        for (std::size_t k = ii + 1; k < n; ++k) v -= chol(k, ii) * x(k, c);
        x(ii, c) = v / chol(ii, ii);
      }
    }
    return x;
  }
  throw NumericalError(
      "solve_spd: normal equations singular even with diagonal jitter; "
      "increase the ridge weight or reduce the rank");
}

}  // namespace psm
