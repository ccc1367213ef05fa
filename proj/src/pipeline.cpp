#include "psm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "psm/baselines.hpp"
#include "psm/common.hpp"

namespace psm {

namespace fs = std::filesystem;

ImageSplit split_images(const std::vector<std::string>& image_ids, double test_fraction,
                        std::uint64_t seed) {
  std::vector<std::string> shuffled = image_ids;
  std::sort(shuffled.begin(), shuffled.end());
  Rng rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_below(i)]);

  const std::size_t test_count = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(shuffled.size())));
  ImageSplit split;
  split.test.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(test_count));
  split.training.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(test_count),
                        shuffled.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.training.begin(), split.training.end());
  return split;
}

SelectionResult select_for_dataset(const Dataset& dataset,
                                   const std::vector<std::string>& pool, std::size_t count) {
  std::map<std::string, std::map<std::string, SaliencyMap>> psms;
  for (const std::string& person : dataset.training_person_ids())
    for (const std::string& image : pool) psms[person][image] = dataset.psm(person, image);

  std::vector<ObjectAnnotation> pool_annotations;
  const std::set<std::string> pool_set(pool.begin(), pool.end());
  for (const ObjectAnnotation& annotation : dataset.annotations())
    if (pool_set.contains(annotation.image_id)) pool_annotations.push_back(annotation);

  return select_common_images(image_scores(pool_annotations, psms), count);
}

SaliencyMap supervision_map(const Dataset& dataset, const RunConfig& cfg,
                            const std::string& person, const std::string& image) {
  const bool use_fixations =
      cfg.supervision == "fixations" ||
      (cfg.supervision == "auto" && dataset.has_fixations(person, image));
  if (!use_fixations) return dataset.psm(person, image);
  const ImageRecord& record = dataset.image(image);
  const double sigma =
      cfg.gt_sigma > 0.0 ? cfg.gt_sigma : static_cast<double>(record.d2) / 25.0;
  return gt_map_from_fixations(dataset.fixations(person, image), record.d1, record.d2, sigma);
}

SaliencyMap resample_directed(const SaliencyMap& map, std::size_t d1, std::size_t d2) {
  const Resample mode = d1 * d2 <= map.d1 * map.d2 ? Resample::kDown : Resample::kUp;
  return resample(map, d1, d2, mode);
}

DenseTensor stack_inputs(const Dataset& dataset, const std::vector<std::string>& training_persons,
                         const std::string& image, std::size_t d1, std::size_t d2) {
  DenseTensor stacked = DenseTensor::zeros({training_persons.size(), d1, d2});
  const std::size_t block = d1 * d2;
  for (std::size_t p = 0; p < training_persons.size(); ++p) {
    const SaliencyMap working = resample_directed(dataset.psm(training_persons[p], image), d1, d2);
    std::copy(working.values.begin(), working.values.end(),
              stacked.values.begin() + static_cast<std::ptrdiff_t>(p * block));
  }
  return stacked;
}

namespace {

struct RunLog {
  std::ofstream stream;

  explicit RunLog(const fs::path& path) : stream(path, std::ios::app) {}

  void line(const std::string& message) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%d %H:%M:%S", std::gmtime(&now));
    stream << "[" << stamp << "] " << message << "\n";
  }
};

struct PreparedRun {
  ImageSplit split;
  SelectionResult selection;
  std::vector<std::string> training_persons;
  std::vector<std::string> targets;
  std::vector<std::string> common;                       // sorted
  std::map<std::string, TrainingSet> training_sets;      // per target
  std::map<std::string, DenseTensor> test_inputs;        // per test image (working shape)
  std::map<PairKey, SaliencyMap> ground_truth;           // (target, test image) at native size
  std::vector<std::string> flags;
};

PreparedRun prepare(Dataset& dataset, const RunConfig& cfg) {
  cfg.validate();
  PreparedRun prep;
  prep.training_persons = dataset.training_person_ids();
  prep.targets = dataset.target_person_ids();
  if (prep.targets.empty()) throw ValidationError("run: at least one target person is required");
  if (prep.training_persons.size() < 2)
    throw ValidationError("run: at least two training persons are required");

  dataset.set_strict(cfg.strict);
  prep.split = split_images(dataset.image_ids(), cfg.test_fraction, cfg.split_seed);
  if (cfg.common_images > prep.split.training.size())
    throw ValidationError("run: common_images = " + std::to_string(cfg.common_images) +
                          " exceeds the training pool of " +
                          std::to_string(prep.split.training.size()));

  prep.selection = select_for_dataset(dataset, prep.split.training, cfg.common_images);
  dataset.set_common_images(prep.selection.chosen);
  if (prep.selection.chosen.size() == prep.split.training.size())
    prep.flags.push_back("zero held-out common-pool remainder");
  if (prep.split.test.empty()) prep.flags.push_back("empty test set");

  prep.common = prep.selection.chosen;
  std::sort(prep.common.begin(), prep.common.end());
  const std::size_t d1 = cfg.regression.working_d1;
  const std::size_t d2 = cfg.regression.working_d2;
  const std::size_t persons = prep.training_persons.size();
  const std::size_t in_block = persons * d1 * d2;
  const std::size_t out_block = d1 * d2;

  // Shared input stacks for the common images.
  std::vector<DenseTensor> common_inputs;
  for (const std::string& image : prep.common)
    common_inputs.push_back(stack_inputs(dataset, prep.training_persons, image, d1, d2));

  for (const std::string& target : prep.targets) {
    DenseTensor inputs = DenseTensor::zeros({prep.common.size(), persons, d1, d2});
    DenseTensor targets_tensor = DenseTensor::zeros({prep.common.size(), d1, d2});
    for (std::size_t i = 0; i < prep.common.size(); ++i) {
      std::copy(common_inputs[i].values.begin(), common_inputs[i].values.end(),
                inputs.values.begin() + static_cast<std::ptrdiff_t>(i * in_block));
      const SaliencyMap native = supervision_map(dataset, cfg, target, prep.common[i]);
      const SaliencyMap working = resample_directed(native, d1, d2);
      std::copy(working.values.begin(), working.values.end(),
                targets_tensor.values.begin() + static_cast<std::ptrdiff_t>(i * out_block));
    }
    TrainingSet set(std::move(inputs), std::move(targets_tensor));
    set.validate(/*require_non_negative=*/true);
    prep.training_sets.emplace(target, std::move(set));
  }

  for (const std::string& image : prep.split.test) {
    prep.test_inputs.emplace(image,
                             stack_inputs(dataset, prep.training_persons, image, d1, d2));
    for (const std::string& target : prep.targets)
      prep.ground_truth.emplace(PairKey{target, image}, dataset.psm(target, image));
  }
  return prep;
}

RunArtifacts run_experiment_impl(Dataset& dataset, const RunConfig& cfg, const fs::path& out,
                                 RunLog& log) {
  PreparedRun prep = prepare(dataset, cfg);
  for (const std::string& flag : prep.flags) log.line("flag: " + flag);

  RunArtifacts artifacts;
  artifacts.split = prep.split;
  artifacts.selection = prep.selection;
  artifacts.flags = prep.flags;

  std::map<std::string, std::map<PairKey, SaliencyMap>> predictions;

  // Uniform-average baseline maps are target-independent; build once.
  std::map<std::string, SaliencyMap> uniform_maps;
  const PersonWeights uniform = uniform_weights(prep.training_persons.size());
  for (const std::string& image : prep.split.test) {
    std::vector<SaliencyMap> maps;
    for (const std::string& person : prep.training_persons)
      maps.push_back(dataset.psm(person, image));
    uniform_maps.emplace(image, weighted_average_psm(uniform, maps));
  }

  for (const std::string& target : prep.targets) {
    const TrainingSet& data = prep.training_sets.at(target);
    FittedModel model = fit(data, cfg.regression, prep.training_persons);
    const std::string model_path = (out / "models" / (target + ".cpw")).string();
    save_model(model_path, model);
    artifacts.model_paths[target] = model_path;
    log.line("fitted " + target + " (objective " +
             std::to_string(model.objective_trace.back()) + ", sweeps " +
             std::to_string(model.objective_trace.size() - 1) + ")");

    // Similarity baseline weights from the common images at native size.
    std::vector<SaliencyMap> target_gt_common;
    std::vector<std::vector<SaliencyMap>> training_common(prep.training_persons.size());
    for (const std::string& image : prep.common) {
      target_gt_common.push_back(supervision_map(dataset, cfg, target, image));
      for (std::size_t p = 0; p < prep.training_persons.size(); ++p)
        training_common[p].push_back(dataset.psm(prep.training_persons[p], image));
    }
    const PersonWeights similarity =
        similarity_weights(target_gt_common, training_common, cfg.similarity_temperature);

    for (const std::string& image : prep.split.test) {
      const ImageRecord& record = dataset.image(image);
      const SaliencyMap working = predict(model, prep.test_inputs.at(image));
      SaliencyMap proposed = resample_directed(working, record.d1, record.d2);

      std::vector<SaliencyMap> native_maps;
      for (const std::string& person : prep.training_persons)
        native_maps.push_back(dataset.psm(person, image));
      SaliencyMap weighted = weighted_average_psm(similarity, native_maps);

      for (const auto& [method, map] :
           std::initializer_list<std::pair<const char*, const SaliencyMap*>>{
               {"proposed", &proposed},
               {"uniform_average", &uniform_maps.at(image)},
               {"similarity_weighted", &weighted}}) {
        const fs::path dir = out / "predictions" / method / target;
        fs::create_directories(dir);
        write_map((dir / (image + ".f32")).string(), *map);
        predictions[method].emplace(PairKey{target, image}, *map);
      }
    }
  }

  artifacts.report = evaluate_suite(predictions, prep.ground_truth);
  write_selection_json((out / "selection.json").string(), prep.selection);
  write_report_csv((out / "report.csv").string(), artifacts.report);
  std::map<std::string, std::string> notes = {
      {"similarity_weighted",
       "stand-in weighting: mean CC over common images, softmax at temperature " +
           std::to_string(cfg.similarity_temperature)}};
  if (!prep.flags.empty()) {
    std::string joined;
    for (const std::string& flag : prep.flags) joined += (joined.empty() ? "" : "; ") + flag;
    notes["flags"] = joined;
  }
  write_report_json((out / "report.json").string(), artifacts.report, notes);
  log.line("run finished");
  return artifacts;
}

}  // namespace

RunArtifacts run_experiment(Dataset& dataset, const RunConfig& cfg) {
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "models");
  RunLog log(out / "run.log");
  log.line("run started");
  std::error_code ignored;
  fs::remove(out / "FAILED", ignored);

  try {
    return run_experiment_impl(dataset, cfg, out, log);
  } catch (const std::exception& e) {
    // Whatever phases completed stay on disk; the marker records the abort.
    std::ofstream marker(out / "FAILED");
    marker << e.what() << "\n";
    log.line(std::string("run failed: ") + e.what());
    throw;
  }
}

std::vector<SweepRow> sweep_experiment(Dataset& dataset, const RunConfig& cfg) {
  if (cfg.sweep_grid.empty())
    throw ValidationError("sweep: the configuration defines no (rank, lambda) grid");
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  RunLog log(out / "run.log");
  log.line("sweep started");

  PreparedRun prep = prepare(dataset, cfg);
  std::vector<GridCell> cells = cfg.sweep_grid;
  std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    return a.rank != b.rank ? a.rank < b.rank : a.lambda < b.lambda;
  });

  std::vector<SweepRow> rows;
  for (const GridCell& cell : cells) {
    RegressionConfig regression = cfg.regression;
    regression.rank = cell.rank;
    regression.lambda = cell.lambda;

    SweepRow row;
    row.rank = cell.rank;
    row.lambda = cell.lambda;
    double kl_sum = 0.0, cc_sum = 0.0;
    for (const std::string& target : prep.targets) {
      const FittedModel model = fit(prep.training_sets.at(target), regression,
                                    prep.training_persons);
      for (const std::string& image : prep.split.test) {
        const ImageRecord& record = dataset.image(image);
        const SaliencyMap working = predict(model, prep.test_inputs.at(image));
        const SaliencyMap native = resample_directed(working, record.d1, record.d2);
        try {
          const SaliencyMap& gt = prep.ground_truth.at(PairKey{target, image});
          kl_sum += kl_divergence(native, gt);
          cc_sum += cross_correlation(native, gt);
          ++row.pairs;
        } catch (const ValidationError&) {
          // degenerate pair; excluded
        }
      }
    }
    if (row.pairs > 0) {
      row.mean_kldiv = kl_sum / static_cast<double>(row.pairs);
      row.mean_cc = cc_sum / static_cast<double>(row.pairs);
    }
    rows.push_back(row);
    log.line("cell rank=" + std::to_string(cell.rank) + " lambda=" + std::to_string(cell.lambda) +
             " done");
  }
  write_sweep_csv((out / "sweep.csv").string(), rows);
  log.line("sweep finished");
  return rows;
}

void write_selection_json(const std::string& path, const SelectionResult& selection) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["chosen"] = selection.chosen;
  doc["scores"] = selection.scores;
  doc["covered_categories"] = selection.covered_categories;
  std::ofstream out(path);
  if (!out) throw ValidationError("write_selection_json: cannot open " + path);
  out << doc.dump(2) << "\n";
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_sweep_csv: cannot open " + path);
  out << "rank,lambda,kldiv,cc\n";
  char buffer[96];
  for (const SweepRow& row : rows) {
    std::snprintf(buffer, sizeof(buffer), "%zu,%.9g,%.9g,%.9g", row.rank, row.lambda,
                  row.mean_kldiv, row.mean_cc);
    out << buffer << "\n";
  }
}

}  // namespace psm
