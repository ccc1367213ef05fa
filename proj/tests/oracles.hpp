#pragma once

// Independent brute-force references used to freeze expected values. These
// deliberately avoid the library's factorized code paths: everything here is
// plain nested-loop index arithmetic.

#include <cmath>
#include <cstddef>
#include <vector>

#include "psm/common.hpp"
#include "psm/saliency.hpp"
#include "psm/tensor.hpp"

namespace oracle {

/// out[o] = sum_i x[i] * w_dense[i, o], looping over every multi-index.
inline psm::DenseTensor brute_contract(const psm::DenseTensor& x,
                                       const psm::DenseTensor& w_dense, std::size_t q) {
  std::vector<std::size_t> out_shape(w_dense.shape.begin() + static_cast<std::ptrdiff_t>(q),
                                     w_dense.shape.end());
  psm::DenseTensor out = psm::DenseTensor::zeros(out_shape);
  const std::size_t in_total = x.size();
  const std::size_t out_total = out.size();
  for (std::size_t in_flat = 0; in_flat < in_total; ++in_flat)
    for (std::size_t out_flat = 0; out_flat < out_total; ++out_flat)
      out.values[out_flat] += x.values[in_flat] * w_dense.values[in_flat * out_total + out_flat];
  return out;
}

/// Column-wise Kronecker product by definition.
inline psm::Matrix brute_khatri_rao(const psm::Matrix& a, const psm::Matrix& b) {
  psm::Matrix out(a.rows() * b.rows(), a.cols());
  for (std::size_t r = 0; r < a.cols(); ++r) {
    std::size_t row = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.rows(); ++j) out(row++, r) = a(i, r) * b(j, r);
  }
  return out;
}

/// Full (non-separable) Gaussian smoothing with reflect padding; kernel
/// truncated at 4*sigma, result max-normalized. Mirrors the documented
/// convention with an independent quadratic-cost implementation.
inline psm::SaliencyMap direct_gaussian_gt(const psm::FixationSet& fixations, std::size_t d1,
                                           std::size_t d2, double sigma) {
  auto reflect = [](long i, long n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };
  std::vector<double> raster(d1 * d2, 0.0);
  for (const psm::Fixation& p : fixations.points) raster[p.y * d2 + p.x] += 1.0;

  const long radius = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> kernel;
  for (long ky = -radius; ky <= radius; ++ky)
    for (long kx = -radius; kx <= radius; ++kx)
      kernel.push_back(std::exp(-0.5 * static_cast<double>(ky * ky + kx * kx) / (sigma * sigma)));

  // The truncated 2-D Gaussian is the outer product of the 1-D taps, so the
  // normalizer is the squared 1-D sum (max-normalization later cancels it
  // anyway).
  double axis_sum = 0.0;
  for (long k = -radius; k <= radius; ++k)
    axis_sum += std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));

  std::vector<double> smoothed(d1 * d2, 0.0);
  for (std::size_t r = 0; r < d1; ++r)
    for (std::size_t c = 0; c < d2; ++c) {
      double sum = 0.0;
      std::size_t kernel_index = 0;
      for (long ky = -radius; ky <= radius; ++ky)
        for (long kx = -radius; kx <= radius; ++kx) {
          const long rr = reflect(static_cast<long>(r) + ky, static_cast<long>(d1));
          const long cc = reflect(static_cast<long>(c) + kx, static_cast<long>(d2));
          sum += kernel[kernel_index++] * raster[static_cast<std::size_t>(rr) * d2 +
                                                 static_cast<std::size_t>(cc)];
        }
      smoothed[r * d2 + c] = sum / (axis_sum * axis_sum);
    }
  return psm::normalize_unit_max(psm::SaliencyMap(d1, d2, std::move(smoothed)));
}

inline psm::DenseTensor random_tensor(std::vector<std::size_t> shape, psm::Rng& rng,
                                      double lo = -1.0, double hi = 1.0) {
  psm::DenseTensor t = psm::DenseTensor::zeros(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

inline psm::Matrix random_matrix(std::size_t rows, std::size_t cols, psm::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  psm::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace oracle
