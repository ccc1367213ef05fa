// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "psm/baselines.hpp"
#include "psm/common.hpp"
#include "psm/config.hpp"
#include "psm/dataset.hpp"
#include "psm/metrics.hpp"
#include "psm/pipeline.hpp"
#include "psm/regression.hpp"
#include "psm/saliency.hpp"
#include "psm/selection.hpp"
#include "psm/synth.hpp"
#include "psm/tensor.hpp"

#ifndef PSM_CLI_PATH
#define PSM_CLI_PATH ""
#endif

namespace {

using namespace psm;
namespace fs = std::filesystem;

struct Failure {
  std::string message;
};

void require(bool condition, const std::string& message) {
  if (!condition) throw Failure{message};
}

std::string format_double(double value) {
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "psm_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

DenseTensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  DenseTensor t = DenseTensor::zeros(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Brute-force contraction over a materialized weight tensor.
DenseTensor brute_contract(const DenseTensor& x, const DenseTensor& w_dense, std::size_t q) {
  std::vector<std::size_t> out_shape(w_dense.shape.begin() + static_cast<std::ptrdiff_t>(q),
                                     w_dense.shape.end());
  DenseTensor out = DenseTensor::zeros(out_shape);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < out.size(); ++o)
      out.values[o] += x.values[i] * w_dense.values[i * out.size() + o];
  return out;
}

// --- criterion bodies --------------------------------------------------------

void criterion_contraction_oracle() {
  Rng rng(101);
  for (int instance = 0; instance < 50; ++instance) {
    std::vector<std::size_t> shape(5);
    std::size_t total;
    do {
      total = 1;
      for (std::size_t& extent : shape) {
        extent = 1 + rng.uniform_below(6);
        total *= extent;
      }
    } while (total > 10'000);
    const std::size_t rank = 1 + rng.uniform_below(4);

    DenseTensor x = random_tensor({shape[0], shape[1], shape[2]}, rng, -1.0, 1.0);
    std::vector<Matrix> factors;
    for (std::size_t extent : shape) factors.push_back(random_matrix(extent, rank, rng, -1.0, 1.0));
    CpFactors w(rank, std::move(factors));

    DenseTensor fast = contract_leading(x, w, 3);
    DenseTensor slow = brute_contract(x, cp_reconstruct(w), 3);
    double scale = 0.0;
    for (double v : slow.values) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < fast.size(); ++j)
      require(std::abs(fast.values[j] - slow.values[j]) <= 1e-10 * std::max(scale, 1.0),
              "instance " + std::to_string(instance) + ": relative error above 1e-10");
  }
}

void criterion_als_monotonicity() {
  const double lambdas[3] = {0.0, 0.1, 10.0};
  for (int instance = 0; instance < 20; ++instance) {
    Rng rng(500 + instance);
    const std::size_t persons = 2 + rng.uniform_below(3);  // <= 4
    const std::size_t d1 = 2 + rng.uniform_below(5);       // <= 6
    const std::size_t d2 = 2 + rng.uniform_below(5);
    const std::size_t samples = 5 + rng.uniform_below(26);  // <= 30
    const std::size_t rank = 1 + rng.uniform_below(4);
    const double lambda = lambdas[instance % 3];

    TrainingSet data(random_tensor({samples, persons, d1, d2}, rng, 0.0, 1.0),
                     random_tensor({samples, d1, d2}, rng, 0.0, 1.0));
    RegressionConfig cfg;
    cfg.rank = rank;
    cfg.lambda = lambda;
    cfg.seed = 900 + static_cast<std::uint64_t>(instance);
    cfg.working_d1 = d1;
    cfg.working_d2 = d2;

    CpFactors factors = init_factors(data, cfg);
    double previous = objective(factors, data, lambda);
    for (int sweep = 0; sweep < 6; ++sweep) {
      const AlsSweepResult result = als_sweep(factors, data, cfg);
      for (double after : result.objective_after_update) {
        require(after <= previous + 1e-9 * std::max(previous, 1e-12),
                "instance " + std::to_string(instance) + ": objective rose from " +
                    format_double(previous) + " to " + format_double(after));
        previous = after;
      }
    }
  }
}

void criterion_planted_recovery() {
  SynthConfig synth;
  synth.seed = 7;
  synth.training_persons = 3;
  synth.images = 40;
  synth.d1 = 4;
  synth.d2 = 4;
  synth.planted_rank = 2;
  synth.noise = 0.0;
  PlantedInstance instance = plant_regression_instance(synth);

  RegressionConfig cfg;
  cfg.rank = 2;
  cfg.lambda = 1e-8;
  cfg.seed = 1;
  cfg.working_d1 = 4;
  cfg.working_d2 = 4;
  cfg.max_sweeps = 4000;
  cfg.rel_tol = 1e-12;
  FittedModel model = fit(instance.data, cfg);

  double train_sq = 0.0;
  for (std::size_t i = 0; i < instance.data.samples(); ++i) {
    const DenseTensor pred = predict_raw(model, instance.data.input_slice(i));
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double diff = pred.values[j] - instance.data.targets.values[i * 16 + j];
      train_sq += diff * diff;
    }
  }
  const double train_rmse = std::sqrt(train_sq / static_cast<double>(40 * 16));
  require(train_rmse < 1e-4, "training RMSE " + format_double(train_rmse) + " >= 1e-4");

  Rng rng(4242);
  double held_sq = 0.0;
  for (int fresh = 0; fresh < 10; ++fresh) {
    const DenseTensor x = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    const DenseTensor truth_y = contract_leading(x, instance.truth, 3);
    const DenseTensor pred = predict_raw(model, x);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double diff = pred.values[j] - truth_y.values[j];
      held_sq += diff * diff;
    }
  }
  const double held_rmse = std::sqrt(held_sq / static_cast<double>(10 * 16));
  require(held_rmse < 1e-3, "held-out RMSE " + format_double(held_rmse) + " >= 1e-3");
}

void criterion_gradient_check() {
  for (int instance = 0; instance < 10; ++instance) {
    Rng rng(700 + instance);
    const std::size_t persons = 2 + rng.uniform_below(2);
    const std::size_t d1 = 2 + rng.uniform_below(2);
    const std::size_t d2 = 2 + rng.uniform_below(2);
    const std::size_t samples = 4 + rng.uniform_below(4);
    const std::size_t rank = 1 + rng.uniform_below(2);
    const double lambda = 0.3;

    TrainingSet data(random_tensor({samples, persons, d1, d2}, rng, 0.0, 1.0),
                     random_tensor({samples, d1, d2}, rng, 0.0, 1.0));
    std::vector<Matrix> factors;
    for (std::size_t extent : {persons, d1, d2, d1, d2})
      factors.push_back(random_matrix(extent, rank, rng, -1.0, 1.0));
    CpFactors weights(rank, std::move(factors));

    const double step = 1e-6;
    for (std::size_t mode = 0; mode < 5; ++mode) {
      const Matrix analytic = objective_gradient(weights, data, lambda, mode);
      double max_abs = 0.0, max_diff = 0.0;
      for (std::size_t u = 0; u < analytic.rows(); ++u) {
        for (std::size_t r = 0; r < analytic.cols(); ++r) {
          CpFactors plus = weights, minus = weights;
          plus.factors[mode](u, r) += step;
          minus.factors[mode](u, r) -= step;
          const double fd =
              (objective(plus, data, lambda) - objective(minus, data, lambda)) / (2.0 * step);
          max_abs = std::max(max_abs, std::abs(fd));
          max_diff = std::max(max_diff, std::abs(fd - analytic(u, r)));
        }
      }
      require(max_diff <= 1e-4 * std::max(max_abs, 1.0),
              "instance " + std::to_string(instance) + " mode " + std::to_string(mode) +
                  ": gradient mismatch " + format_double(max_diff / std::max(max_abs, 1.0)));
    }
  }
}

void criterion_metric_identities() {
  Rng rng(31);
  std::vector<double> values(24 * 32);
  for (double& v : values) v = rng.uniform01();
  const SaliencyMap m(24, 32, values);

  const double self_kl = kl_divergence(m, m);
  require(std::abs(self_kl) <= 1e-9, "KL(m,m) = " + format_double(self_kl));

  const SaliencyMap gt(2, 2, {0.5, 0.5, 0.0, 0.0});
  const SaliencyMap uniform(2, 2, {0.25, 0.25, 0.25, 0.25});
  const double two_by_two = kl_divergence(uniform, gt);
  require(std::abs(two_by_two - std::log(2.0)) <= 1e-4,
          "2x2 example KL = " + format_double(two_by_two));

  require(std::abs(cross_correlation(m, m) - 1.0) <= 1e-12, "CC(m,m) != 1");

  std::vector<double> affine(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) affine[i] = 3.0 * values[i] + 0.7;
  require(std::abs(cross_correlation(SaliencyMap(24, 32, affine), m) - 1.0) <= 1e-12,
          "CC affine invariance failed");

  const double top = m.max_value();
  std::vector<double> anti(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) anti[i] = top - values[i];
  require(std::abs(cross_correlation(SaliencyMap(24, 32, anti), m) + 1.0) <= 1e-12,
          "CC anti-correlation failed");
}

void criterion_object_variance_hand_case() {
  const std::vector<SaliencyMap> crops = {SaliencyMap(1, 2, {1.0, 0.0}),
                                          SaliencyMap(1, 2, {0.0, 1.0})};
  const double q = object_variance(crops);
  require(std::abs(q - 0.25) <= 1e-12, "q = " + format_double(q) + " != 0.25");
}

// Exhaustive maximum coverage for small instances.
std::size_t exhaustive_max_coverage(const std::map<std::string, ImageScore>& scores,
                                    std::size_t count) {
  std::vector<std::string> ids;
  for (const auto& [id, score] : scores) ids.push_back(id);
  std::size_t best = 0;
  std::vector<std::size_t> comb(count);
  for (std::size_t i = 0; i < count; ++i) comb[i] = i;
  while (true) {
    std::set<int> covered;
    for (std::size_t i : comb)
      for (const auto& [cat, q] : scores.at(ids[i]).per_category) covered.insert(cat);
    best = std::max(best, covered.size());
    std::size_t k = count;
    bool advanced = false;
    while (k > 0) {
      --k;
      if (comb[k] + 1 <= ids.size() - (count - k)) {
        ++comb[k];
        for (std::size_t j = k + 1; j < count; ++j) comb[j] = comb[j - 1] + 1;
        advanced = true;
        break;
      }
    }
    if (!advanced) return best;
  }
}

void criterion_ais_oracle() {
  Rng rng(404);
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t images = 4 + rng.uniform_below(7);  // <= 10
    const std::size_t count = 1 + rng.uniform_below(3);   // <= 3
    const int categories = 4;
    std::map<std::string, ImageScore> scores;
    for (std::size_t n = 0; n < images; ++n) {
      ImageScore score;
      const std::size_t objects = 2 + rng.uniform_below(3);  // 2..4 objects
      for (std::size_t b = 0; b < objects; ++b) {
        const int category = 1 + static_cast<int>(rng.uniform_below(categories));
        const double q = rng.uniform01();
        auto [it, inserted] = score.per_category.try_emplace(category, q);
        if (!inserted) it->second = std::max(it->second, q);
      }
      for (const auto& [cat, q] : score.per_category) score.total += q;
      scores["i" + std::to_string(10 + n)] = score;
    }
    const SelectionResult greedy = select_common_images(scores, count);
    const std::size_t optimum = exhaustive_max_coverage(scores, count);
    require(greedy.covered_categories.size() == optimum,
            "instance " + std::to_string(instance) + ": greedy " +
                std::to_string(greedy.covered_categories.size()) + " vs optimum " +
                std::to_string(optimum));
  }
}

void criterion_end_to_end_superiority(std::vector<std::string>& details) {
  int similarity_wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig synth;
    synth.seed = seed;
    synth.training_persons = 5;
    synth.target_persons = 2;
    synth.images = 80;
    synth.d1 = 32;
    synth.d2 = 24;
    synth.noise = 0.02;
    synth.content_weight = 0.25;
    synth.fixations_per_image = 10'000;

    const fs::path data_dir = scratch_dir() / ("c8_data_" + std::to_string(seed));
    write_dataset(synth, data_dir.string());
    Dataset dataset = Dataset::ingest((data_dir / "manifest.json").string());

    RunConfig cfg;
    cfg.common_images = 20;
    cfg.split_seed = 0;
    cfg.gt_sigma = 1.5;
    cfg.out_dir = (scratch_dir() / ("c8_out_" + std::to_string(seed))).string();
    cfg.regression.rank = 8;
    cfg.regression.lambda = 20.0;
    cfg.regression.seed = 7;
    cfg.regression.center_targets = true;
    cfg.regression.working_d1 = 32;
    cfg.regression.working_d2 = 24;

    const RunArtifacts artifacts = run_experiment(dataset, cfg);
    const MethodAggregate& proposed = artifacts.report.methods.at("proposed");
    const MethodAggregate& uniform = artifacts.report.methods.at("uniform_average");
    const MethodAggregate& similarity = artifacts.report.methods.at("similarity_weighted");

    details.push_back("seed " + std::to_string(seed) + ": proposed kl " +
                      format_double(proposed.mean_kldiv) + " cc " +
                      format_double(proposed.mean_cc) + " | uniform kl " +
                      format_double(uniform.mean_kldiv) + " cc " +
                      format_double(uniform.mean_cc) + " | similarity kl " +
                      format_double(similarity.mean_kldiv));

    require(proposed.mean_kldiv < uniform.mean_kldiv,
            "seed " + std::to_string(seed) + ": proposed KL not below the uniform baseline");
    require(proposed.mean_cc > uniform.mean_cc,
            "seed " + std::to_string(seed) + ": proposed CC not above the uniform baseline");
    if (proposed.mean_kldiv < similarity.mean_kldiv) ++similarity_wins;
  }
  require(similarity_wins >= 4, "proposed beat the similarity baseline on only " +
                                    std::to_string(similarity_wins) + " of 5 seeds");
}

void criterion_sweep_trend() {
  SynthConfig synth;
  synth.seed = 7;
  synth.training_persons = 3;
  synth.images = 40;
  synth.d1 = 4;
  synth.d2 = 4;
  synth.planted_rank = 2;
  synth.noise = 0.0;
  const PlantedInstance instance = plant_regression_instance(synth);

  std::vector<GridCell> grid;
  const double lambdas[3] = {1e-8, 1e-2, 1.0};
  for (std::size_t rank : {std::size_t{1}, std::size_t{2}})
    for (double lambda : lambdas) grid.push_back(GridCell{rank, lambda});
  std::vector<std::size_t> validation;
  for (std::size_t i = 0; i < 40; i += 4) validation.push_back(i);

  RegressionConfig base;
  base.seed = 2;
  base.working_d1 = 4;
  base.working_d2 = 4;
  base.max_sweeps = 800;
  base.rel_tol = 1e-10;
  const std::vector<SweepRow> rows = sweep_hyperparameters(instance.data, grid, validation, base);
  require(rows.size() == 6, "expected 6 sweep rows");
  for (double lambda : lambdas) {
    double kl_rank1 = 0.0, kl_rank2 = 0.0;
    for (const SweepRow& row : rows) {
      if (row.lambda != lambda) continue;
      (row.rank == 1 ? kl_rank1 : kl_rank2) = row.mean_kldiv;
    }
    require(kl_rank2 < kl_rank1, "lambda " + format_double(lambda) + ": KL at true rank (" +
                                     format_double(kl_rank2) + ") not below rank 1 (" +
                                     format_double(kl_rank1) + ")");
  }
}

void criterion_cli_determinism(const std::string& cli) {
  require(!cli.empty() && fs::exists(cli), "CLI binary not found at '" + cli + "'");

  SynthConfig synth;
  synth.seed = 11;
  synth.training_persons = 3;
  synth.target_persons = 1;
  synth.images = 16;
  synth.d1 = 12;
  synth.d2 = 10;
  synth.noise = 0.02;
  synth.fixations_per_image = 500;
  const fs::path data_dir = scratch_dir() / "determinism_data";
  write_dataset(synth, data_dir.string());

  const fs::path out_a = scratch_dir() / "determinism_a";
  const fs::path out_b = scratch_dir() / "determinism_b";
  for (const fs::path& out : {out_a, out_b}) {
    const std::string command = cli + " run --manifest " + (data_dir / "manifest.json").string() +
                                " --out " + out.string() +
                                " --common-images 6 --rank 2 --lambda 0.5 --seed 3 > " +
                                (out.string() + ".stdout") + " 2>&1";
    const int status = std::system(command.c_str());
    require(status == 0, "CLI run exited with status " + std::to_string(status));
  }

  auto slurp = [](const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const std::string report_a = slurp(out_a / "report.csv");
  const std::string report_b = slurp(out_b / "report.csv");
  require(!report_a.empty(), "report.csv is empty");
  require(report_a == report_b, "report.csv differs between identical runs");
}

void criterion_fixation_round_trip() {
  SynthConfig synth;
  synth.seed = 21;
  synth.training_persons = 1;
  synth.target_persons = 0;
  synth.images = 1;
  synth.d1 = 32;
  synth.d2 = 24;
  const SynthPersons persons = generate_persons(synth);
  const SaliencyMap base = synth_psm(synth, persons, 0, 0);

  const double sigma = 2.5;
  const SaliencyMap source =
      gt_map_from_fixations(sample_fixations(base, 200, 5, "img", "p"), 32, 24, sigma);
  const FixationSet fixations = sample_fixations(source, 10'000, 23, "img", "p");
  const SaliencyMap rebuilt = gt_map_from_fixations(fixations, 32, 24, sigma);
  const double cc = cross_correlation(rebuilt, source);
  require(cc >= 0.9, "round-trip CC = " + format_double(cc));
}

struct Criterion {
  int id;
  std::string label;
  double budget_seconds;
  std::function<void(std::vector<std::string>&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  std::string cli = PSM_CLI_PATH;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

  const std::vector<Criterion> criteria = {
      {1, "factorized contraction matches brute force on 50 instances (rel err < 1e-10)", 5.0,
       [](std::vector<std::string>&) { criterion_contraction_oracle(); }},
      {2, "objective non-increasing per factor update on 20 instances (1e-9 relative)", 30.0,
       [](std::vector<std::string>&) { criterion_als_monotonicity(); }},
      {3, "noiseless rank-2 plant recovered (train RMSE < 1e-4, held-out < 1e-3)", 10.0,
       [](std::vector<std::string>&) { criterion_planted_recovery(); }},
      {4, "analytic gradients match central differences on 10 instances (1e-4)", 60.0,
       [](std::vector<std::string>&) { criterion_gradient_check(); }},
      {5, "metric identities: KL self-zero, 2x2 = ln 2, CC self/affine/anti", 5.0,
       [](std::vector<std::string>&) { criterion_metric_identities(); }},
      {6, "object-variance hand case q = 0.25 (1e-12)", 5.0,
       [](std::vector<std::string>&) { criterion_object_variance_hand_case(); }},
      {7, "greedy selection reaches exhaustive max coverage on 100 instances", 10.0,
       [](std::vector<std::string>&) { criterion_ais_oracle(); }},
      {8, "regression beats both baselines on the heterogeneous dataset (5 seeds)", 180.0,
       [](std::vector<std::string>& details) { criterion_end_to_end_superiority(details); }},
      {9, "validation KL at the true rank beats rank 1 for every lambda", 60.0,
       [](std::vector<std::string>&) { criterion_sweep_trend(); }},
      {10, "repeated CLI runs produce byte-identical report.csv", 60.0,
       [&cli](std::vector<std::string>&) { criterion_cli_determinism(cli); }},
      {11, "fixation round trip at 10^4 samples keeps CC >= 0.9", 10.0,
       [](std::vector<std::string>&) { criterion_fixation_round_trip(); }},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    std::vector<std::string> details;
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      criterion.body(details);
    } catch (const Failure& failure) {
      error = failure.message;
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (error.empty() && elapsed > criterion.budget_seconds)
      error = "runtime " + format_double(elapsed) + "s exceeds the " +
              format_double(criterion.budget_seconds) + "s budget";
    std::printf("[%s] criterion %2d: %s (%.2fs)\n", error.empty() ? "PASS" : "FAIL", criterion.id,
                criterion.label.c_str(), elapsed);
    for (const std::string& line : details) std::printf("         %s\n", line.c_str());
    if (!error.empty()) {
      std::printf("         reason: %s\n", error.c_str());
      ++failures;
    }
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
