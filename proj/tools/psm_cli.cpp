// Experiment CLI: dataset checks, image selection, model fitting, prediction,
// evaluation, full runs, hyperparameter sweeps, and synthetic-dataset
// generation. Exit codes: 0 success, 2 validation failure, 3 numerical
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psm/common.hpp"
#include "psm/config.hpp"
#include "psm/dataset.hpp"
#include "psm/metrics.hpp"
#include "psm/pipeline.hpp"
#include "psm/regression.hpp"
#include "psm/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace psm;

struct CliOptions {
  std::string manifest;
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t rank = 0;
  double lambda = -1.0;
  std::size_t common_images = 0;
  bool paper_grid = false;
  bool strict = false;
};

RunConfig resolve_config(const CliOptions& options) {
  RunConfig cfg;
  if (!options.config.empty()) cfg = load_run_config(options.config);
  if (options.seed_set) {
    cfg.split_seed = options.seed;
    cfg.regression.seed = options.seed;
  }
  if (options.rank > 0) cfg.regression.rank = options.rank;
  if (options.lambda >= 0.0) cfg.regression.lambda = options.lambda;
  if (options.common_images > 0) cfg.common_images = options.common_images;
  if (options.strict) cfg.strict = true;
  if (options.paper_grid) cfg.sweep_grid = paper_grid();
  cfg.out_dir = options.out;
  cfg.validate();
  return cfg;
}

int cmd_ingest_check(const CliOptions& options) {
  Dataset dataset = Dataset::ingest(options.manifest);
  std::printf("ok: %zu images, %zu training persons, %zu target persons, %zu annotations, "
              "%zu fixation files\n",
              dataset.image_ids().size(), dataset.training_person_ids().size(),
              dataset.target_person_ids().size(), dataset.annotations().size(),
              dataset.manifest().fixation_files.size());
  return 0;
}

int cmd_select(const CliOptions& options) {
  Dataset dataset = Dataset::ingest(options.manifest);
  const std::size_t count = options.common_images > 0 ? options.common_images : 20;
  SelectionResult selection = select_for_dataset(dataset, dataset.image_ids(), count);
  fs::create_directories(options.out);
  const std::string path = (fs::path(options.out) / "selection.json").string();
  write_selection_json(path, selection);
  std::printf("selected %zu images covering %zu categories -> %s\n", selection.chosen.size(),
              selection.covered_categories.size(), path.c_str());
  return 0;
}

int cmd_fit(const CliOptions& options) {
  Dataset dataset = Dataset::ingest(options.manifest);
  RunConfig cfg = resolve_config(options);
  dataset.set_strict(cfg.strict);

  SelectionResult selection =
      select_for_dataset(dataset, dataset.image_ids(), cfg.common_images);
  dataset.set_common_images(selection.chosen);
  std::vector<std::string> common = selection.chosen;
  std::sort(common.begin(), common.end());

  const std::vector<std::string> training = dataset.training_person_ids();
  const std::size_t d1 = cfg.regression.working_d1;
  const std::size_t d2 = cfg.regression.working_d2;
  fs::create_directories(fs::path(cfg.out_dir) / "models");
  write_selection_json((fs::path(cfg.out_dir) / "selection.json").string(), selection);

  for (const std::string& target : dataset.target_person_ids()) {
    DenseTensor inputs = DenseTensor::zeros({common.size(), training.size(), d1, d2});
    DenseTensor targets = DenseTensor::zeros({common.size(), d1, d2});
    const std::size_t in_block = training.size() * d1 * d2;
    const std::size_t out_block = d1 * d2;
    for (std::size_t i = 0; i < common.size(); ++i) {
      DenseTensor stacked = stack_inputs(dataset, training, common[i], d1, d2);
      std::copy(stacked.values.begin(), stacked.values.end(),
                inputs.values.begin() + static_cast<std::ptrdiff_t>(i * in_block));
      const SaliencyMap working =
          resample_directed(supervision_map(dataset, cfg, target, common[i]), d1, d2);
      std::copy(working.values.begin(), working.values.end(),
                targets.values.begin() + static_cast<std::ptrdiff_t>(i * out_block));
    }
    FittedModel model = fit(TrainingSet(std::move(inputs), std::move(targets)), cfg.regression,
                            training);
    const std::string path = (fs::path(cfg.out_dir) / "models" / (target + ".cpw")).string();
    save_model(path, model);
    std::printf("fitted %s: final objective %.6g after %zu sweeps -> %s\n", target.c_str(),
                model.objective_trace.back(), model.objective_trace.size() - 1, path.c_str());
  }
  return 0;
}

int cmd_predict(const CliOptions& options, const std::string& model_path,
                const std::string& images_arg) {
  Dataset dataset = Dataset::ingest(options.manifest);
  FittedModel model = load_model(model_path);

  std::vector<std::string> images;
  if (images_arg == "all") {
    images = dataset.image_ids();
  } else {
    std::stringstream stream(images_arg);
    std::string token;
    while (std::getline(stream, token, ','))
      if (!token.empty()) images.push_back(token);
  }
  if (images.empty()) throw ValidationError("predict: no images requested");

  fs::create_directories(options.out);
  for (const std::string& image : images) {
    const ImageRecord& record = dataset.image(image);
    const DenseTensor input = stack_inputs(dataset, model.persons, image,
                                           model.config.working_d1, model.config.working_d2);
    const SaliencyMap working = predict(model, input);
    const SaliencyMap native = resample_directed(working, record.d1, record.d2);
    write_map((fs::path(options.out) / (image + ".f32")).string(), native);
  }
  std::printf("wrote %zu predicted maps to %s\n", images.size(), options.out.c_str());
  return 0;
}

int cmd_evaluate(const CliOptions& options, const std::string& predictions_dir) {
  Dataset dataset = Dataset::ingest(options.manifest);
  std::map<std::string, std::map<PairKey, SaliencyMap>> predictions;
  std::map<PairKey, SaliencyMap> ground_truth;

  // Layout: <predictions_dir>/<method>/<target>/<image>.f32
  for (const auto& method_entry : fs::directory_iterator(predictions_dir)) {
    if (!method_entry.is_directory()) continue;
    const std::string method = method_entry.path().filename().string();
    for (const auto& target_entry : fs::directory_iterator(method_entry.path())) {
      if (!target_entry.is_directory()) continue;
      const std::string target = target_entry.path().filename().string();
      for (const auto& map_entry : fs::directory_iterator(target_entry.path())) {
        if (map_entry.path().extension() != ".f32") continue;
        const std::string image = map_entry.path().stem().string();
        predictions[method][{target, image}] = read_map(map_entry.path().string());
        ground_truth.emplace(PairKey{target, image}, dataset.psm(target, image));
      }
    }
  }
  if (predictions.empty())
    throw ValidationError("evaluate: no <method>/<target>/<image>.f32 maps under " +
                          predictions_dir);

  const EvalReport report = evaluate_suite(predictions, ground_truth);
  fs::create_directories(options.out);
  write_report_csv((fs::path(options.out) / "report.csv").string(), report);
  write_report_json((fs::path(options.out) / "report.json").string(), report);
  for (const auto& [method, aggregate] : report.methods)
    std::printf("%-22s kldiv %.4f  cc %.4f  (%zu pairs, %zu excluded)\n", method.c_str(),
                aggregate.mean_kldiv, aggregate.mean_cc, aggregate.pairs, aggregate.excluded);
  return 0;
}

int cmd_run(const CliOptions& options) {
  Dataset dataset = Dataset::ingest(options.manifest);
  RunConfig cfg = resolve_config(options);
  RunArtifacts artifacts = run_experiment(dataset, cfg);
  for (const auto& [method, aggregate] : artifacts.report.methods)
    std::printf("%-22s kldiv %.4f  cc %.4f  (%zu pairs)\n", method.c_str(),
                aggregate.mean_kldiv, aggregate.mean_cc, aggregate.pairs);
  for (const std::string& flag : artifacts.flags) std::printf("flag: %s\n", flag.c_str());
  return 0;
}

int cmd_sweep(const CliOptions& options) {
  Dataset dataset = Dataset::ingest(options.manifest);
  RunConfig cfg = resolve_config(options);
  if (cfg.sweep_grid.empty())
    throw ValidationError("sweep: provide --paper-grid or a [sweep] grid in --config");
  const std::vector<SweepRow> rows = sweep_experiment(dataset, cfg);
  for (const SweepRow& row : rows)
    std::printf("rank %2zu  lambda %-10.4g kldiv %.4f  cc %.4f\n", row.rank, row.lambda,
                row.mean_kldiv, row.mean_cc);
  return 0;
}

int cmd_synth(const SynthConfig& cfg, const std::string& out, bool planted) {
  if (planted)
    write_planted_dataset(cfg, out);
  else
    write_dataset(cfg, out);
  std::printf("wrote %s dataset (%zu training persons, %zu targets, %zu images) to %s\n",
              planted ? "planted" : "synthetic", cfg.training_persons, cfg.target_persons,
              cfg.images, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot personalized saliency prediction via low-rank tensor regression"};
  app.require_subcommand(1);

  CliOptions options;
  std::string model_path;
  std::string images_arg = "all";
  std::string predictions_dir;

  auto add_common = [&](CLI::App* cmd, bool needs_manifest = true) {
    if (needs_manifest)
      cmd->add_option("--manifest", options.manifest, "dataset manifest.json")->required();
    cmd->add_option("--config", options.config, "run configuration (.json or .toml)");
    cmd->add_option("--out", options.out, "output directory");
    cmd->add_option("--seed", options.seed, "override split and fit seeds")
        ->each([&](const std::string&) { options.seed_set = true; });
    cmd->add_option("--rank", options.rank, "override CP rank");
    cmd->add_option("--lambda", options.lambda, "override ridge weight")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--common-images", options.common_images, "override common-image count");
    cmd->add_flag("--paper-grid", options.paper_grid,
                  "sweep rank {5..50 step 5} x lambda {0.01..10000 decades}");
    cmd->add_flag("--strict", options.strict,
                  "forbid target fixation reads outside the common images");
  };

  CLI::App* ingest = app.add_subcommand("ingest-check", "validate a dataset manifest");
  add_common(ingest);

  CLI::App* select = app.add_subcommand("select", "adaptive common-image selection");
  add_common(select);

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one model per target person");
  add_common(fit_cmd);

  CLI::App* predict_cmd = app.add_subcommand("predict", "predict maps with a fitted model");
  add_common(predict_cmd);
  predict_cmd->add_option("--model", model_path, "fitted model file")->required();
  predict_cmd->add_option("--images", images_arg, "comma-separated image ids, or 'all'");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score predicted maps against GT");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--predictions", predictions_dir, "directory of predicted maps")
      ->required();

  CLI::App* run_cmd = app.add_subcommand("run", "full experiment: select, fit, predict, evaluate");
  add_common(run_cmd);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "hyperparameter grid sweep");
  add_common(sweep_cmd);

  SynthConfig synth_cfg;
  std::string synth_shape = "32x24";
  bool planted = false;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out", options.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_cfg.seed, "generator seed");
  synth_cmd->add_option("--persons", synth_cfg.training_persons, "training persons");
  synth_cmd->add_option("--targets", synth_cfg.target_persons, "target persons");
  synth_cmd->add_option("--images", synth_cfg.images, "image count");
  synth_cmd->add_option("--categories", synth_cfg.categories, "object categories");
  synth_cmd->add_option("--shape", synth_shape, "map shape d1xd2 (default 32x24)");
  synth_cmd->add_option("--components", synth_cfg.components, "latent components (<= 8)");
  synth_cmd->add_option("--noise", synth_cfg.noise, "additive noise sigma");
  synth_cmd->add_option("--rank", synth_cfg.planted_rank, "planted CP rank");
  synth_cmd->add_option("--content-weight", synth_cfg.content_weight, "image content weight");
  synth_cmd->add_option("--fixations-per-image", synth_cfg.fixations_per_image,
                        "target fixations per image");
  synth_cmd->add_flag("--planted", planted, "planted-weights dataset (exact linear targets)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest_check(options);
    if (app.got_subcommand(select)) return cmd_select(options);
    if (app.got_subcommand(fit_cmd)) return cmd_fit(options);
    if (app.got_subcommand(predict_cmd)) return cmd_predict(options, model_path, images_arg);
    if (app.got_subcommand(evaluate_cmd)) return cmd_evaluate(options, predictions_dir);
    if (app.got_subcommand(run_cmd)) return cmd_run(options);
    if (app.got_subcommand(sweep_cmd)) return cmd_sweep(options);
    if (app.got_subcommand(synth_cmd)) {
      const auto x = synth_shape.find('x');
      if (x == std::string::npos)
        throw ValidationError("synth: --shape must look like 32x24");
      synth_cfg.d1 = static_cast<std::size_t>(std::stoull(synth_shape.substr(0, x)));
      synth_cfg.d2 = static_cast<std::size_t>(std::stoull(synth_shape.substr(x + 1)));
      return cmd_synth(synth_cfg, options.out, planted);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
