#include "psm/tensor.hpp"

#include <numeric>
#include <string>

#include "psm/common.hpp"

namespace psm {

namespace {

std::size_t checked_total(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ValidationError("tensor order must be >= 1");
  std::size_t total = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) throw ValidationError("tensor extents must be >= 1");
    total *= extent;
  }
  return total;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
  const std::size_t total = checked_total(shape);
  if (total != values.size())
    throw ValidationError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape product " + std::to_string(total));
}

DenseTensor DenseTensor::zeros(std::vector<std::size_t> shape_in) {
  const std::size_t total = checked_total(shape_in);
  DenseTensor t;
  t.shape = std::move(shape_in);
  t.values.assign(total, 0.0);
  return t;
}

double DenseTensor::at(std::span<const std::size_t> index) const {
  return values[flat_index(shape, index)];
}

double& DenseTensor::at(std::span<const std::size_t> index) {
  return values[flat_index(shape, index)];
}

CpFactors::CpFactors(std::size_t rank_in, std::vector<Matrix> factors_in)
    : rank(rank_in), factors(std::move(factors_in)) {
  if (rank == 0) throw ValidationError("CP rank must be >= 1");
  if (factors.empty()) throw ValidationError("CP factors must cover at least one mode");
  for (const Matrix& f : factors) {
    if (f.cols() != rank)
      throw ValidationError("CP factor has " + std::to_string(f.cols()) +
                            " columns, expected rank " + std::to_string(rank));
    if (f.rows() == 0) throw ValidationError("CP factor extent must be >= 1");
  }
}

std::vector<std::size_t> CpFactors::shape() const {
  std::vector<std::size_t> s;
  s.reserve(factors.size());
  for (const Matrix& f : factors) s.push_back(f.rows());
  return s;
}

std::size_t flat_index(std::span<const std::size_t> shape, std::span<const std::size_t> index) {
  if (shape.size() != index.size()) throw ValidationError("flat_index: order mismatch");
  // Row-major: the last mode varies fastest.
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (index[k] >= shape[k]) throw ValidationError("flat_index: index out of range");
    flat = flat * shape[k] + index[k];
  }
  return flat;
}

Matrix mode_unfold(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.order())
    throw ValidationError("mode_unfold: mode " + std::to_string(mode) +
                          " out of range for order " + std::to_string(t.order()));
  const std::size_t rows = t.shape[mode];
  const std::size_t cols = t.size() / rows;
  Matrix out(rows, cols);

  std::vector<std::size_t> index(t.order(), 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    // Column index: remaining modes ascending, the first listed varies
    // fastest, so accumulate from the highest remaining mode downwards.
    std::size_t col = 0;
    for (std::size_t k = t.order(); k-- > 0;) {
      if (k == mode) continue;
      col = col * t.shape[k] + index[k];
    }
    out(index[mode], col) = t.values[flat];

    for (std::size_t k = t.order(); k-- > 0;) {
      if (++index[k] < t.shape[k]) break;
      index[k] = 0;
    }
  }
  return out;
}

DenseTensor mode_refold(const Matrix& m, const std::vector<std::size_t>& shape, std::size_t mode) {
  if (mode >= shape.size())
    throw ValidationError("mode_refold: mode out of range");
  std::size_t total = 1;
  for (std::size_t extent : shape) total *= extent;
  if (m.rows() != shape[mode] || m.rows() * m.cols() != total)
    throw ValidationError("mode_refold: matrix size does not match target shape");

  DenseTensor t = DenseTensor::zeros(shape);
  std::vector<std::size_t> index(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t col = 0;
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (k == mode) continue;
      col = col * shape[k] + index[k];
    }
    t.values[flat] = m(index[mode], col);
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (++index[k] < shape[k]) break;
      index[k] = 0;
    }
  }
  return t;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ValidationError("khatri_rao: column counts differ (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.cols()) + ")");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      for (std::size_t r = 0; r < a.cols(); ++r)
        out(i * b.rows() + j, r) = a(i, r) * b(j, r);
  return out;
}

DenseTensor cp_reconstruct(const CpFactors& f, std::size_t size_cap) {
  const std::vector<std::size_t> shape = f.shape();
  std::size_t total = 1;
  for (std::size_t extent : shape) {
    total *= extent;
    if (total > size_cap)
      throw ValidationError("cp_reconstruct: tensor size exceeds cap of " +
                            std::to_string(size_cap) + " entries");
  }

  DenseTensor t = DenseTensor::zeros(shape);
  std::vector<std::size_t> index(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double value = 0.0;
    for (std::size_t r = 0; r < f.rank; ++r) {
      double term = 1.0;
      for (std::size_t k = 0; k < shape.size(); ++k) term *= f.factors[k](index[k], r);
      value += term;
    }
    t.values[flat] = value;
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (++index[k] < shape[k]) break;
      index[k] = 0;
    }
  }
  return t;
}

namespace {

// Contracts the trailing axis of a [outer x len] buffer with `weights`.
void reduce_trailing_axis(std::vector<double>& buf, std::size_t len,
                          const Matrix& factor, std::size_t r) {
  const std::size_t outer = buf.size() / len;
  for (std::size_t i = 0; i < outer; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) sum += buf[i * len + j] * factor(j, r);
    buf[i] = sum;
  }
  buf.resize(outer);
}

}  // namespace

DenseTensor contract_leading(const DenseTensor& x, const CpFactors& w, std::size_t q) {
  if (q != x.order())
    throw ValidationError("contract_leading: q = " + std::to_string(q) +
                          " must equal the input order " + std::to_string(x.order()));
  if (w.order() <= q)
    throw ValidationError("contract_leading: weight order " + std::to_string(w.order()) +
                          " leaves no output modes beyond q = " + std::to_string(q));
  for (std::size_t k = 0; k < q; ++k)
    if (w.factors[k].rows() != x.shape[k])
      throw ValidationError("contract_leading: extent mismatch on mode " + std::to_string(k));

  std::vector<std::size_t> out_shape;
  for (std::size_t k = q; k < w.order(); ++k) out_shape.push_back(w.factors[k].rows());
  DenseTensor out = DenseTensor::zeros(out_shape);

  std::vector<double> buf;
  std::vector<std::size_t> index(out_shape.size(), 0);
  for (std::size_t r = 0; r < w.rank; ++r) {
    // c_r = <x, outer product of the leading factor columns>, last axis first.
    buf = x.values;
    for (std::size_t k = q; k-- > 0;) reduce_trailing_axis(buf, x.shape[k], w.factors[k], r);
    const double c_r = buf[0];
    if (c_r == 0.0) continue;

    std::fill(index.begin(), index.end(), 0);
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
      double term = c_r;
      for (std::size_t k = 0; k < out_shape.size(); ++k) term *= w.factors[q + k](index[k], r);
      out.values[flat] += term;
      for (std::size_t k = out_shape.size(); k-- > 0;) {
        if (++index[k] < out_shape[k]) break;
        index[k] = 0;
      }
    }
  }
  return out;
}

}  // namespace psm
