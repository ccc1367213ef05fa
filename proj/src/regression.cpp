#include "psm/regression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "psm/common.hpp"
#include "psm/metrics.hpp"

namespace psm {

void RegressionConfig::validate() const {
  if (rank == 0) throw ValidationError("RegressionConfig: rank must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ValidationError("RegressionConfig: lambda must be finite and >= 0");
  if (max_sweeps == 0) throw ValidationError("RegressionConfig: max_sweeps must be >= 1");
  if (!(rel_tol > 0.0)) throw ValidationError("RegressionConfig: rel_tol must be > 0");
  if (working_d1 == 0 || working_d2 == 0)
    throw ValidationError("RegressionConfig: working shape extents must be >= 1");
}

TrainingSet::TrainingSet(DenseTensor inputs_in, DenseTensor targets_in)
    : inputs(std::move(inputs_in)), targets(std::move(targets_in)) {
  validate();
}

void TrainingSet::validate(bool require_non_negative) const {
  if (inputs.order() != 4)
    throw ValidationError("TrainingSet: inputs must have order 4 (I x P x d1 x d2)");
  if (targets.order() != 3)
    throw ValidationError("TrainingSet: targets must have order 3 (I x d1 x d2)");
  if (inputs.shape[0] != targets.shape[0])
    throw ValidationError("TrainingSet: inputs and targets disagree on sample count");
  for (double v : inputs.values)
    if (!std::isfinite(v)) throw ValidationError("TrainingSet: non-finite input value");
  for (double v : targets.values)
    if (!std::isfinite(v)) throw ValidationError("TrainingSet: non-finite target value");
  if (require_non_negative) {
    for (double v : inputs.values)
      if (v < 0.0) throw ValidationError("TrainingSet: negative input value");
    for (double v : targets.values)
      if (v < 0.0) throw ValidationError("TrainingSet: negative target value");
  }
}

DenseTensor TrainingSet::input_slice(std::size_t i) const {
  if (i >= samples()) throw ValidationError("TrainingSet: sample index out of range");
  const std::size_t block = inputs.size() / samples();
  std::vector<double> values(inputs.values.begin() + static_cast<std::ptrdiff_t>(i * block),
                             inputs.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
  return DenseTensor({inputs.shape[1], inputs.shape[2], inputs.shape[3]}, std::move(values));
}

SaliencyMap TrainingSet::target_map(std::size_t i) const {
  if (i >= samples()) throw ValidationError("TrainingSet: sample index out of range");
  const std::size_t block = targets.size() / samples();
  std::vector<double> values(targets.values.begin() + static_cast<std::ptrdiff_t>(i * block),
                             targets.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
  return SaliencyMap(targets.shape[1], targets.shape[2], std::move(values));
}

namespace {

// Factor roles, in the fixed update order.
constexpr std::size_t kPerson = 0;
constexpr std::size_t kInRow = 1;
constexpr std::size_t kInCol = 2;
constexpr std::size_t kOutRow = 3;
constexpr std::size_t kOutCol = 4;

struct Dims {
  std::size_t samples, persons, d1, d2, e1, e2;
};

Dims dims_of(const TrainingSet& data) {
  return Dims{data.inputs.shape[0], data.inputs.shape[1], data.inputs.shape[2],
              data.inputs.shape[3], data.targets.shape[1], data.targets.shape[2]};
}

void check_weights(const CpFactors& w, const Dims& dims) {
  if (w.order() != 5) throw ValidationError("weights must have order 5");
  const std::size_t extents[5] = {dims.persons, dims.d1, dims.d2, dims.e1, dims.e2};
  for (std::size_t k = 0; k < 5; ++k)
    if (w.factors[k].rows() != extents[k])
      throw ValidationError("weight factor " + std::to_string(k) + " has " +
                            std::to_string(w.factors[k].rows()) + " rows, expected " +
                            std::to_string(extents[k]));
}

void reduce_trailing(std::vector<double>& buf, std::size_t len, const Matrix& f, std::size_t r) {
  const std::size_t outer = buf.size() / len;
  for (std::size_t i = 0; i < outer; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) sum += buf[i * len + j] * f(j, r);
    buf[i] = sum;
  }
  buf.resize(outer);
}

void reduce_leading(std::vector<double>& buf, std::size_t len, const Matrix& f, std::size_t r) {
  const std::size_t block = buf.size() / len;
  std::vector<double> out(block, 0.0);
  for (std::size_t l = 0; l < len; ++l) {
    const double w = f(l, r);
    if (w == 0.0) continue;
    for (std::size_t b = 0; b < block; ++b) out[b] += w * buf[l * block + b];
  }
  buf = std::move(out);
}

std::span<const double> input_block(const TrainingSet& data, const Dims& dims, std::size_t i) {
  const std::size_t block = dims.persons * dims.d1 * dims.d2;
  return {data.inputs.values.data() + i * block, block};
}

std::span<const double> target_block(const TrainingSet& data, const Dims& dims, std::size_t i) {
  const std::size_t block = dims.e1 * dims.e2;
  return {data.targets.values.data() + i * block, block};
}

/// Z(i, r): full contraction of sample i with the three leading factor
/// columns of rank r.
Matrix compute_z(const CpFactors& w, const TrainingSet& data, const Dims& dims) {
  Matrix z(dims.samples, w.rank);
  std::vector<double> buf;
  for (std::size_t i = 0; i < dims.samples; ++i) {
    const auto block = input_block(data, dims, i);
    for (std::size_t r = 0; r < w.rank; ++r) {
      buf.assign(block.begin(), block.end());
      reduce_trailing(buf, dims.d2, w.factors[kInCol], r);
      reduce_trailing(buf, dims.d1, w.factors[kInRow], r);
      reduce_trailing(buf, dims.persons, w.factors[kPerson], r);
      z(i, r) = buf[0];
    }
  }
  return z;
}

/// Partial contraction of sample i over the two input modes other than
/// `skip`, one column per rank: a (extent_skip x R) matrix.
Matrix partial_contraction(const CpFactors& w, const TrainingSet& data, const Dims& dims,
                           std::size_t i, std::size_t skip) {
  const std::size_t extents[3] = {dims.persons, dims.d1, dims.d2};
  Matrix t(extents[skip], w.rank);
  std::vector<double> buf;
  const auto block = input_block(data, dims, i);
  for (std::size_t r = 0; r < w.rank; ++r) {
    buf.assign(block.begin(), block.end());
    if (skip == kPerson) {
      reduce_trailing(buf, dims.d2, w.factors[kInCol], r);
      reduce_trailing(buf, dims.d1, w.factors[kInRow], r);
    } else if (skip == kInRow) {
      reduce_trailing(buf, dims.d2, w.factors[kInCol], r);
      reduce_leading(buf, dims.persons, w.factors[kPerson], r);
    } else {
      reduce_leading(buf, dims.persons, w.factors[kPerson], r);
      reduce_leading(buf, dims.d1, w.factors[kInRow], r);
    }
    for (std::size_t u = 0; u < t.rows(); ++u) t(u, r) = buf[u];
  }
  return t;
}

double residual_sq_with_z(const CpFactors& w, const TrainingSet& data, const Dims& dims,
                          const Matrix& z) {
  const Matrix& out_row = w.factors[kOutRow];
  const Matrix& out_col = w.factors[kOutCol];
  double residual = 0.0;
  std::vector<double> pred(dims.e1 * dims.e2);
  for (std::size_t i = 0; i < dims.samples; ++i) {
    std::fill(pred.begin(), pred.end(), 0.0);
    for (std::size_t r = 0; r < w.rank; ++r) {
      const double zr = z(i, r);
      if (zr == 0.0) continue;
      for (std::size_t c = 0; c < dims.e1; ++c) {
        const double rc = zr * out_row(c, r);
        for (std::size_t d = 0; d < dims.e2; ++d) pred[c * dims.e2 + d] += rc * out_col(d, r);
      }
    }
    const auto y = target_block(data, dims, i);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double diff = y[j] - pred[j];
      residual += diff * diff;
    }
  }
  return residual;
}

/// Hadamard product of the Gram matrices of every factor except `skip`
/// (pass 5 or more to include all).
Matrix gram_hadamard_except(const CpFactors& w, std::size_t skip) {
  Matrix h;
  bool first = true;
  for (std::size_t k = 0; k < w.order(); ++k) {
    if (k == skip) continue;
    if (first) {
      h = gram(w.factors[k]);
      first = false;
    } else {
      h = hadamard(h, gram(w.factors[k]));
    }
  }
  return h;
}

/// V(i, r) = sum_{c,d} target_i[c,d] * out_row(c,r) * out_col(d,r).
Matrix compute_v(const CpFactors& w, const TrainingSet& data, const Dims& dims) {
  Matrix v(dims.samples, w.rank);
  for (std::size_t i = 0; i < dims.samples; ++i) {
    const auto y = target_block(data, dims, i);
    for (std::size_t r = 0; r < w.rank; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < dims.e1; ++c) {
        double row_sum = 0.0;
        for (std::size_t d = 0; d < dims.e2; ++d)
          row_sum += y[c * dims.e2 + d] * w.factors[kOutCol](d, r);
        sum += row_sum * w.factors[kOutRow](c, r);
      }
      v(i, r) = sum;
    }
  }
  return v;
}

struct InputSystem {
  Matrix normal;           // (m*R) x (m*R), unpenalized
  std::vector<double> rhs;  // m*R, vec layout (u, r) -> u*R + r
};

/// Normal equations for one input-mode factor (person / input-row /
/// input-col): the design matrix is the Khatri-Rao structured map
/// vec(A_mode) -> predictions, so its Gram factors into per-sample partial
/// contractions times the output Gram pattern.
InputSystem input_mode_system(const CpFactors& w, const TrainingSet& data, const Dims& dims,
                              std::size_t mode, const Matrix& v) {
  const std::size_t m = w.factors[mode].rows();
  const std::size_t rank = w.rank;
  const std::size_t n = m * rank;

  Matrix coeff(n, n);  // sum_i vec(T_i) vec(T_i)^T
  std::vector<double> rhs(n, 0.0);
  for (std::size_t i = 0; i < dims.samples; ++i) {
    const Matrix t = partial_contraction(w, data, dims, i, mode);
    const double* tv = t.data().data();
    for (std::size_t a = 0; a < n; ++a) {
      const double ta = tv[a];
      if (ta == 0.0) continue;
      double* row = coeff.data().data() + a * n;
      for (std::size_t b = 0; b < n; ++b) row[b] += ta * tv[b];
    }
    for (std::size_t u = 0; u < m; ++u)
      for (std::size_t r = 0; r < rank; ++r) rhs[u * rank + r] += t(u, r) * v(i, r);
  }

  const Matrix s_out = hadamard(gram(w.factors[kOutRow]), gram(w.factors[kOutCol]));
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t r = 0; r < rank; ++r)
      for (std::size_t u2 = 0; u2 < m; ++u2)
        for (std::size_t r2 = 0; r2 < rank; ++r2)
          coeff(u * rank + r, u2 * rank + r2) *= s_out(r, r2);
  return InputSystem{std::move(coeff), std::move(rhs)};
}

void update_input_mode(CpFactors& w, const TrainingSet& data, const Dims& dims, std::size_t mode,
                       double lambda, const Matrix& v) {
  InputSystem sys = input_mode_system(w, data, dims, mode, v);
  const std::size_t m = w.factors[mode].rows();
  const std::size_t rank = w.rank;

  const Matrix h = gram_hadamard_except(w, mode);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t r = 0; r < rank; ++r)
      for (std::size_t r2 = 0; r2 < rank; ++r2)
        sys.normal(u * rank + r, u * rank + r2) += lambda * h(r, r2);

  Matrix b(m * rank, 1);
  for (std::size_t j = 0; j < m * rank; ++j) b(j, 0) = sys.rhs[j];
  const Matrix solution = solve_spd(sys.normal, b);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t r = 0; r < rank; ++r) w.factors[mode](u, r) = solution(u * rank + r, 0);
}

struct OutputSystem {
  // gram(Z) o gram(other output factor): the Gram matrix of the Khatri-Rao
  // design khatri_rao(Z, other), assembled without forming it.
  Matrix gram_design;
  Matrix rhs;  // extent x R
};

OutputSystem output_mode_system(const CpFactors& w, const TrainingSet& data, const Dims& dims,
                                std::size_t mode, const Matrix& z) {
  const std::size_t other = (mode == kOutRow) ? kOutCol : kOutRow;
  OutputSystem sys;
  sys.gram_design = hadamard(gram(z), gram(w.factors[other]));
  sys.rhs = Matrix(w.factors[mode].rows(), w.rank);
  for (std::size_t i = 0; i < dims.samples; ++i) {
    const auto y = target_block(data, dims, i);
    for (std::size_t r = 0; r < w.rank; ++r) {
      const double zr = z(i, r);
      if (zr == 0.0) continue;
      if (mode == kOutRow) {
        for (std::size_t c = 0; c < dims.e1; ++c) {
          double sum = 0.0;
          for (std::size_t d = 0; d < dims.e2; ++d)
            sum += y[c * dims.e2 + d] * w.factors[kOutCol](d, r);
          sys.rhs(c, r) += zr * sum;
        }
      } else {
        for (std::size_t d = 0; d < dims.e2; ++d) {
          double sum = 0.0;
          for (std::size_t c = 0; c < dims.e1; ++c)
            sum += y[c * dims.e2 + d] * w.factors[kOutRow](c, r);
          sys.rhs(d, r) += zr * sum;
        }
      }
    }
  }
  return sys;
}

void update_output_mode(CpFactors& w, const TrainingSet& data, const Dims& dims, std::size_t mode,
                        double lambda, const Matrix& z) {
  OutputSystem sys = output_mode_system(w, data, dims, mode, z);
  Matrix m = sys.gram_design;
  const Matrix h = gram_hadamard_except(w, mode);
  for (std::size_t r = 0; r < w.rank; ++r)
    for (std::size_t r2 = 0; r2 < w.rank; ++r2) m(r, r2) += lambda * h(r, r2);
  // Rows of the factor share the R x R system; solve M X = rhs^T.
  const Matrix solution = solve_spd(m, transpose(sys.rhs));
  w.factors[mode] = transpose(solution);
}

// Distributes each rank's scale evenly across the five factors. W itself is
// unchanged (the per-rank column scalings multiply to 1), so the objective
// is invariant; this keeps the normal equations well conditioned across
// sweeps.
void rebalance_columns(CpFactors& w) {
  for (std::size_t r = 0; r < w.rank; ++r) {
    double norms[5];
    double product = 1.0;
    bool dead = false;
    for (std::size_t k = 0; k < 5; ++k) {
      double sq = 0.0;
      for (std::size_t u = 0; u < w.factors[k].rows(); ++u) {
        const double v = w.factors[k](u, r);
        sq += v * v;
      }
      norms[k] = std::sqrt(sq);
      product *= norms[k];
      if (norms[k] == 0.0) dead = true;
    }
    if (dead) {
      for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t u = 0; u < w.factors[k].rows(); ++u) w.factors[k](u, r) = 0.0;
      continue;
    }
    const double target = std::pow(product, 0.2);
    for (std::size_t k = 0; k < 5; ++k) {
      const double scale = target / norms[k];
      for (std::size_t u = 0; u < w.factors[k].rows(); ++u) w.factors[k](u, r) *= scale;
    }
  }
}

}  // namespace

double weight_sq_norm(const CpFactors& weights) {
  Matrix h = gram_hadamard_except(weights, weights.order());
  double sum = 0.0;
  for (double v : h.data()) sum += v;
  return sum;
}

double objective(const CpFactors& weights, const TrainingSet& data, double lambda) {
  data.validate();
  const Dims dims = dims_of(data);
  check_weights(weights, dims);
  const Matrix z = compute_z(weights, data, dims);
  return residual_sq_with_z(weights, data, dims, z) + lambda * weight_sq_norm(weights);
}

AlsSweepResult als_sweep(CpFactors& weights, const TrainingSet& data,
                         const RegressionConfig& cfg) {
  cfg.validate();
  data.validate();
  const Dims dims = dims_of(data);
  check_weights(weights, dims);
  const double lambda = cfg.lambda;

  AlsSweepResult result;
  const Matrix v = compute_v(weights, data, dims);

  for (std::size_t mode : {kPerson, kInRow, kInCol}) {
    update_input_mode(weights, data, dims, mode, lambda, v);
    const Matrix z = compute_z(weights, data, dims);
    result.objective_after_update[mode] =
        residual_sq_with_z(weights, data, dims, z) + lambda * weight_sq_norm(weights);
  }

  Matrix z = compute_z(weights, data, dims);
  for (std::size_t mode : {kOutRow, kOutCol}) {
    update_output_mode(weights, data, dims, mode, lambda, z);
    result.objective_after_update[mode] =
        residual_sq_with_z(weights, data, dims, z) + lambda * weight_sq_norm(weights);
  }
  return result;
}

CpFactors init_factors(const TrainingSet& data, const RegressionConfig& cfg) {
  const Dims dims = dims_of(data);
  const std::size_t extents[5] = {dims.persons, dims.d1, dims.d2, dims.e1, dims.e2};
  Rng rng(cfg.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  std::vector<Matrix> factors;
  factors.reserve(5);
  for (std::size_t k = 0; k < 5; ++k) {
    Matrix f(extents[k], cfg.rank);
    for (std::size_t u = 0; u < f.rows(); ++u)
      for (std::size_t r = 0; r < cfg.rank; ++r) f(u, r) = rng.normal() * scale;
    factors.push_back(std::move(f));
  }
  return CpFactors(cfg.rank, std::move(factors));
}

FittedModel fit(const TrainingSet& data, const RegressionConfig& cfg,
                std::vector<std::string> persons) {
  cfg.validate();
  data.validate();
  const Dims dims = dims_of(data);
  if (dims.d1 != cfg.working_d1 || dims.d2 != cfg.working_d2)
    throw ValidationError("fit: data shape " + std::to_string(dims.d1) + "x" +
                          std::to_string(dims.d2) + " does not match config working shape " +
                          std::to_string(cfg.working_d1) + "x" + std::to_string(cfg.working_d2));
  if (dims.e1 != dims.d1 || dims.e2 != dims.d2)
    throw ValidationError("fit: input and target rasters must share the working shape");
  if (persons.empty())
    for (std::size_t p = 0; p < dims.persons; ++p) persons.push_back("person_" + std::to_string(p));
  if (persons.size() != dims.persons)
    throw ValidationError("fit: person id count does not match the input person extent");

  FittedModel model;
  model.config = cfg;
  model.persons = std::move(persons);

  TrainingSet working = data;
  if (cfg.center_targets) {
    const std::size_t block = dims.e1 * dims.e2;
    model.target_mean.assign(block, 0.0);
    for (std::size_t i = 0; i < dims.samples; ++i)
      for (std::size_t j = 0; j < block; ++j)
        model.target_mean[j] += working.targets.values[i * block + j];
    for (double& v : model.target_mean) v /= static_cast<double>(dims.samples);
    for (std::size_t i = 0; i < dims.samples; ++i)
      for (std::size_t j = 0; j < block; ++j)
        working.targets.values[i * block + j] -= model.target_mean[j];
  }

  model.weights = init_factors(working, cfg);
  model.objective_trace.push_back(objective(model.weights, working, cfg.lambda));

  for (std::size_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    const CpFactors before = model.weights;
    const AlsSweepResult result = als_sweep(model.weights, working, cfg);
    double current = result.objective_after_update[4];

    // Bro-style line search: extrapolate along the sweep direction and keep
    // the point only when it strictly lowers the objective. This cuts
    // through the long flat valleys ("swamps") ALS is prone to.
    const double gamma = std::cbrt(static_cast<double>(sweep + 2));
    CpFactors trial = model.weights;
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t j = 0; j < trial.factors[k].size(); ++j)
        trial.factors[k].data()[j] =
            before.factors[k].data()[j] +
            gamma * (model.weights.factors[k].data()[j] - before.factors[k].data()[j]);
    const double trial_objective = objective(trial, working, cfg.lambda);
    if (trial_objective < current) {
      model.weights = std::move(trial);
      current = trial_objective;
    }
    rebalance_columns(model.weights);

    const double previous = model.objective_trace.back();
    model.objective_trace.push_back(current);
    const double change = std::abs(previous - current) / std::max(previous, 1e-12);
    if (change < cfg.rel_tol || current == 0.0) break;
  }
  return model;
}

Matrix objective_gradient(const CpFactors& weights, const TrainingSet& data, double lambda,
                          std::size_t mode) {
  data.validate();
  const Dims dims = dims_of(data);
  check_weights(weights, dims);
  if (mode >= 5) throw ValidationError("objective_gradient: mode out of range");

  const Matrix h = gram_hadamard_except(weights, mode);
  const Matrix& factor = weights.factors[mode];
  Matrix grad(factor.rows(), factor.cols());

  if (mode == kOutRow || mode == kOutCol) {
    const Matrix z = compute_z(weights, data, dims);
    OutputSystem sys = output_mode_system(weights, data, dims, mode, z);
    grad = matmul(factor, sys.gram_design);
    for (std::size_t u = 0; u < grad.rows(); ++u)
      for (std::size_t r = 0; r < grad.cols(); ++r) grad(u, r) -= sys.rhs(u, r);
  } else {
    const Matrix v = compute_v(weights, data, dims);
    InputSystem sys = input_mode_system(weights, data, dims, mode, v);
    const std::size_t rank = weights.rank;
    for (std::size_t u = 0; u < factor.rows(); ++u) {
      for (std::size_t r = 0; r < rank; ++r) {
        double sum = -sys.rhs[u * rank + r];
        for (std::size_t u2 = 0; u2 < factor.rows(); ++u2)
          for (std::size_t r2 = 0; r2 < rank; ++r2)
            sum += sys.normal(u * rank + r, u2 * rank + r2) * factor(u2, r2);
        grad(u, r) = sum;
      }
    }
  }

  const Matrix penalty = matmul(factor, h);
  for (std::size_t u = 0; u < grad.rows(); ++u)
    for (std::size_t r = 0; r < grad.cols(); ++r)
      grad(u, r) = 2.0 * grad(u, r) + 2.0 * lambda * penalty(u, r);
  return grad;
}

DenseTensor predict_raw(const FittedModel& model, const DenseTensor& input) {
  if (input.order() != 3)
    throw ValidationError("predict: input must have order 3 (P x d1 x d2)");
  DenseTensor out = contract_leading(input, model.weights, 3);
  if (!model.target_mean.empty()) {
    if (model.target_mean.size() != out.size())
      throw ValidationError("predict: stored target mean size mismatch");
    for (std::size_t j = 0; j < out.size(); ++j) out.values[j] += model.target_mean[j];
  }
  return out;
}

SaliencyMap predict(const FittedModel& model, const DenseTensor& input) {
  DenseTensor raw = predict_raw(model, input);
  for (double& v : raw.values) v = std::max(0.0, v);
  return normalize_unit_max(SaliencyMap(raw.shape[0], raw.shape[1], std::move(raw.values)));
}

std::vector<SweepRow> sweep_hyperparameters(const TrainingSet& data,
                                            std::span<const GridCell> grid,
                                            std::span<const std::size_t> validation_indices,
                                            const RegressionConfig& base) {
  if (grid.empty()) throw ValidationError("sweep_hyperparameters: empty grid");
  data.validate();
  const std::size_t samples = data.samples();

  std::set<std::size_t> validation(validation_indices.begin(), validation_indices.end());
  for (std::size_t i : validation)
    if (i >= samples) throw ValidationError("sweep_hyperparameters: validation index out of range");
  std::vector<std::size_t> train_indices;
  for (std::size_t i = 0; i < samples; ++i)
    if (!validation.contains(i)) train_indices.push_back(i);
  if (train_indices.empty())
    throw ValidationError("sweep_hyperparameters: split leaves zero training samples");

  // Assemble the training subset.
  const std::size_t in_block = data.inputs.size() / samples;
  const std::size_t out_block = data.targets.size() / samples;
  std::vector<double> in_values, out_values;
  in_values.reserve(train_indices.size() * in_block);
  out_values.reserve(train_indices.size() * out_block);
  for (std::size_t i : train_indices) {
    in_values.insert(in_values.end(), data.inputs.values.begin() + static_cast<std::ptrdiff_t>(i * in_block),
                     data.inputs.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * in_block));
    out_values.insert(out_values.end(), data.targets.values.begin() + static_cast<std::ptrdiff_t>(i * out_block),
                      data.targets.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * out_block));
  }
  TrainingSet train(
      DenseTensor({train_indices.size(), data.inputs.shape[1], data.inputs.shape[2],
                   data.inputs.shape[3]},
                  std::move(in_values)),
      DenseTensor({train_indices.size(), data.targets.shape[1], data.targets.shape[2]},
                  std::move(out_values)));

  std::vector<GridCell> cells(grid.begin(), grid.end());
  std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    return a.rank != b.rank ? a.rank < b.rank : a.lambda < b.lambda;
  });

  std::vector<SweepRow> rows;
  for (const GridCell& cell : cells) {
    RegressionConfig cfg = base;
    cfg.rank = cell.rank;
    cfg.lambda = cell.lambda;
    const FittedModel model = fit(train, cfg);

    SweepRow row;
    row.rank = cell.rank;
    row.lambda = cell.lambda;
    double kl_sum = 0.0, cc_sum = 0.0;
    for (std::size_t i : validation) {
      try {
        const SaliencyMap pred = predict(model, data.input_slice(i));
        const SaliencyMap gt = data.target_map(i);
        const double kl = kl_divergence(pred, gt);
        const double cc = cross_correlation(pred, gt);
        kl_sum += kl;
        cc_sum += cc;
        ++row.pairs;
      } catch (const ValidationError&) {
        // degenerate pair; excluded from the means
      }
    }
    if (row.pairs > 0) {
      row.mean_kldiv = kl_sum / static_cast<double>(row.pairs);
      row.mean_cc = cc_sum / static_cast<double>(row.pairs);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<GridCell> paper_grid() {
  std::vector<GridCell> grid;
  for (std::size_t rank = 5; rank <= 50; rank += 5)
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0})
      grid.push_back(GridCell{rank, lambda});
  return grid;
}

namespace {

void write_doubles_le(std::ofstream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (double v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      bits = __builtin_bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), 8);
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
}

void read_doubles_le(std::ifstream& in, std::span<double> values, const std::string& path) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw ValidationError("load_model: short read on " + path);
  if constexpr (std::endian::native == std::endian::big) {
    for (double& v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      bits = __builtin_bswap64(bits);
      std::memcpy(&v, &bits, 8);
    }
  }
}

}  // namespace

void save_model(const std::string& path, const FittedModel& model) {
  nlohmann::json header = {
      {"format", "psm-cpw"},
      {"version", 1},
      {"rank", model.weights.rank},
      {"lambda", model.config.lambda},
      {"seed", model.config.seed},
      {"max_sweeps", model.config.max_sweeps},
      {"rel_tol", model.config.rel_tol},
      {"shape", model.weights.shape()},
      {"working_shape", {model.config.working_d1, model.config.working_d2}},
      {"center_targets", model.config.center_targets},
      {"persons", model.persons},
      {"objective_trace", model.objective_trace},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("save_model: cannot open " + path);
  out << header.dump() << "\n";
  for (const Matrix& f : model.weights.factors) write_doubles_le(out, f.data());
  if (model.config.center_targets) write_doubles_le(out, model.target_mean);
}

FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("load_model: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw ValidationError("load_model: missing header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_model: bad header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "psm-cpw" || header.value("version", 0) != 1)
    throw ValidationError("load_model: unsupported format/version in " + path);

  FittedModel model;
  model.config.rank = header.at("rank").get<std::size_t>();
  model.config.lambda = header.at("lambda").get<double>();
  model.config.seed = header.at("seed").get<std::uint64_t>();
  model.config.max_sweeps = header.at("max_sweeps").get<std::size_t>();
  model.config.rel_tol = header.at("rel_tol").get<double>();
  model.config.center_targets = header.at("center_targets").get<bool>();
  const auto working = header.at("working_shape").get<std::vector<std::size_t>>();
  if (working.size() != 2) throw ValidationError("load_model: bad working_shape in " + path);
  model.config.working_d1 = working[0];
  model.config.working_d2 = working[1];
  model.persons = header.at("persons").get<std::vector<std::string>>();
  model.objective_trace = header.at("objective_trace").get<std::vector<double>>();

  const auto shape = header.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 5) throw ValidationError("load_model: weight shape must have 5 modes");
  std::vector<Matrix> factors;
  for (std::size_t extent : shape) {
    Matrix f(extent, model.config.rank);
    read_doubles_le(in, f.data(), path);
    factors.push_back(std::move(f));
  }
  model.weights = CpFactors(model.config.rank, std::move(factors));
  if (model.config.center_targets) {
    model.target_mean.resize(shape[3] * shape[4]);
    read_doubles_le(in, model.target_mean, path);
  }

  if (model.persons.size() != shape[0])
    throw ValidationError("load_model: person list length does not match the leading factor");
  for (std::size_t i = 1; i < model.objective_trace.size(); ++i) {
    const double previous = model.objective_trace[i - 1];
    if (model.objective_trace[i] > previous + 1e-9 * std::max(previous, 1e-12))
      throw ValidationError("load_model: objective trace is not non-increasing");
  }
  return model;
}

}  // namespace psm
