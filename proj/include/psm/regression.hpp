#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psm/saliency.hpp"
#include "psm/tensor.hpp"

namespace psm {

struct RegressionConfig {
  std::size_t rank = 5;
  double lambda = 1.0;
  std::size_t max_sweeps = 200;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
  std::size_t working_d1 = 32;
  std::size_t working_d2 = 24;
  bool center_targets = false;

  void validate() const;
};

/// Supervised samples: `inputs` stacks the training persons' maps per common
/// image as an (I x P x d1 x d2) tensor, `targets` holds the target person's
/// supervised maps as (I x d1 x d2).
struct TrainingSet {
  DenseTensor inputs;
  DenseTensor targets;

  TrainingSet() = default;
  TrainingSet(DenseTensor inputs_in, DenseTensor targets_in);

  std::size_t samples() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
  std::size_t persons() const { return inputs.shape.size() < 2 ? 0 : inputs.shape[1]; }

  /// Shape/finiteness checks (always) plus non-negativity when requested.
  void validate(bool require_non_negative = false) const;
  /// Copy of sample i's input block as a (P x d1 x d2) tensor.
  DenseTensor input_slice(std::size_t i) const;
  /// Copy of sample i's target as a saliency map (values clamped at 0 are
  /// rejected, the caller guarantees non-negative targets).
  SaliencyMap target_map(std::size_t i) const;
};

/// Weight tensor W in CP form over (P, d1, d2, d1, d2): factor 0 indexes the
/// training person, 1/2 the input pixel grid, 3/4 the output pixel grid.
/// Immutable once fit() returns and safe to share across threads; fitting
/// itself touches only its own state, so independent fits may run in
/// parallel.
struct FittedModel {
  CpFactors weights;
  RegressionConfig config;
  std::vector<double> objective_trace;  // objective at init, then per sweep
  std::vector<std::string> persons;
  std::vector<double> target_mean;  // e1*e2 when center_targets, else empty
};

/// Penalized least-squares objective:
///   sum_i ||targets_i - <inputs_i, W>_3||_F^2 + lambda * ||W||_F^2,
/// with ||W||_F^2 evaluated from the Hadamard product of the factor Gram
/// matrices (W itself is never materialized).
double objective(const CpFactors& weights, const TrainingSet& data, double lambda);

/// ||W||_F^2 in factorized form.
double weight_sq_norm(const CpFactors& weights);

struct AlsSweepResult {
  /// Objective value after each factor update, in update order
  /// (person, input-row, input-col, output-row, output-col).
  std::array<double, 5> objective_after_update{};
};

/// One alternating-least-squares sweep: each factor matrix in turn is
/// replaced by the exact minimizer of the penalized objective given the
/// others (a ridge solve whose penalty matrix is lambda times the Hadamard
/// product of the other factors' Gram matrices), so the objective is
/// non-increasing after every update.
AlsSweepResult als_sweep(CpFactors& weights, const TrainingSet& data,
                         const RegressionConfig& cfg);

/// Seeded factor initialization: i.i.d. standard normal scaled by
/// 1/sqrt(rank).
CpFactors init_factors(const TrainingSet& data, const RegressionConfig& cfg);

/// Fits W by sweeping until the relative objective change drops below
/// cfg.rel_tol or cfg.max_sweeps is reached. Deterministic given cfg.seed.
FittedModel fit(const TrainingSet& data, const RegressionConfig& cfg,
                std::vector<std::string> persons = {});

/// Analytic gradient of the objective with respect to factor `mode`,
/// assembled from the same normal-equations pieces the sweep uses.
Matrix objective_gradient(const CpFactors& weights, const TrainingSet& data, double lambda,
                          std::size_t mode);

/// Raw regression output for one (P x d1 x d2) input: the contracted product
/// with W (plus the stored target mean when centering is enabled).
DenseTensor predict_raw(const FittedModel& model, const DenseTensor& input);
/// predict_raw with negatives clamped to 0 and the result max-normalized.
SaliencyMap predict(const FittedModel& model, const DenseTensor& input);

struct GridCell {
  std::size_t rank = 1;
  double lambda = 0.0;
};

struct SweepRow {
  std::size_t rank = 0;
  double lambda = 0.0;
  double mean_kldiv = 0.0;
  double mean_cc = 0.0;
  std::size_t pairs = 0;
};

/// Fits each grid cell on the samples outside `validation_indices` and
/// scores KL divergence / correlation on the held-out samples. Rows come
/// back sorted by (rank, lambda). Deterministic given base.seed.
std::vector<SweepRow> sweep_hyperparameters(const TrainingSet& data,
                                            std::span<const GridCell> grid,
                                            std::span<const std::size_t> validation_indices,
                                            const RegressionConfig& base);

/// The hyperparameter grid used in the experiments: rank in {5,10,...,50}
/// and lambda in {0.01, 0.1, ..., 10000}.
std::vector<GridCell> paper_grid();

// Model file: one line of JSON (format tag, version, rank, lambda, seed,
// shape, persons, objective trace, working shape, centering flag) terminated
// by '\n', immediately followed by each factor matrix row-major as
// little-endian float64 in mode order 0..4, then the target mean raster when
// centering is enabled.
void save_model(const std::string& path, const FittedModel& model);
FittedModel load_model(const std::string& path);

}  // namespace psm
