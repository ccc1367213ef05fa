#pragma once

#include <cstddef>
#include <vector>

namespace psm {

/// Dense row-major matrix of doubles. Small and value-semantic; all the
/// heavy lifting in this project happens on R x R or (extent*R) systems.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// a^T a (the Gram matrix of a's columns).
Matrix gram(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// Sum over all entries of the Hadamard product, i.e. <a, b>_F.
double dot_all(const Matrix& a, const Matrix& b);

/// Solves A X = B for symmetric positive (semi)definite A via Cholesky.
/// A singular system is retried with escalating diagonal jitter
/// (1e-12 .. 1e-8 times the dominant diagonal entry); if that still fails
/// a NumericalError is thrown suggesting a larger ridge weight or a
/// smaller rank.
Matrix solve_spd(const Matrix& a, const Matrix& b);

}  // namespace psm
