#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "psm/linalg.hpp"

// All types here are plain values, immutable once constructed, and the
// operations are pure functions: everything is safe to share across threads.

namespace psm {

/// Dense order-Q array, row-major (the last mode varies fastest).
struct DenseTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  DenseTensor() = default;
  /// Validates order >= 1, every extent >= 1 and product(shape) == values.size().
  DenseTensor(std::vector<std::size_t> shape_in, std::vector<double> values_in);

  static DenseTensor zeros(std::vector<std::size_t> shape_in);

  std::size_t order() const { return shape.size(); }
  std::size_t size() const { return values.size(); }

  double at(std::span<const std::size_t> index) const;
  double& at(std::span<const std::size_t> index);
};

/// CP (PARAFAC/CANDECOMP) representation: a sum of `rank` rank-1 terms.
/// factors[k] has shape (extent_k x rank); the represented tensor is
///   T[i_0..i_{Q-1}] = sum_r prod_k factors[k](i_k, r).
struct CpFactors {
  std::size_t rank = 0;
  std::vector<Matrix> factors;

  CpFactors() = default;
  CpFactors(std::size_t rank_in, std::vector<Matrix> factors_in);

  std::size_t order() const { return factors.size(); }
  std::vector<std::size_t> shape() const;
};

std::size_t flat_index(std::span<const std::size_t> shape, std::span<const std::size_t> index);

/// Mode-k unfolding: a matrix of size (extent_k x product of the other
/// extents). Column order is fixed as follows: list the remaining modes in
/// increasing mode index; the first listed mode varies fastest. So for a
/// tensor of shape (n0,n1,n2) unfolded along mode 1, column j corresponds to
/// (i0, i2) with j = i0 + n0*i2. mode_refold is the exact inverse.
Matrix mode_unfold(const DenseTensor& t, std::size_t mode);
DenseTensor mode_refold(const Matrix& m, const std::vector<std::size_t>& shape, std::size_t mode);

/// Column-wise Kronecker product: column r of the result is
/// kron(a[:,r], b[:,r]), with row pairing (i, j) -> i*b.rows() + j.
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Materializes the tensor represented by CP factors. Guarded by a size cap
/// (default 1e7 entries) because weight tensors at dataset resolution must
/// never be expanded.
DenseTensor cp_reconstruct(const CpFactors& f, std::size_t size_cap = 10'000'000);

/// Contracted tensor product over the leading q modes:
///   out[o] = sum_{i_1..i_q} x[i] * W[i, o]
/// where W is given in CP form with order q + order(out). Computed rank by
/// rank in factorized form (W is never materialized): for each r the scalar
/// c_r = <x, outer of the q leading factor columns> scales the outer product
/// of the trailing factor columns; terms accumulate in ascending r.
/// q must equal order(x) and the leading factor extents must match x.
DenseTensor contract_leading(const DenseTensor& x, const CpFactors& w, std::size_t q);

}  // namespace psm
