#pragma once

#include <map>
#include <string>
#include <vector>

#include "psm/config.hpp"
#include "psm/dataset.hpp"
#include "psm/metrics.hpp"
#include "psm/regression.hpp"
#include "psm/selection.hpp"

namespace psm {

/// Seeded train/test split over the sorted image ids. Both lists come back
/// sorted; the test share is round(N * test_fraction).
struct ImageSplit {
  std::vector<std::string> training;
  std::vector<std::string> test;
};
ImageSplit split_images(const std::vector<std::string>& image_ids, double test_fraction,
                        std::uint64_t seed);

/// AIS over the training pool: per-image variance scores from the training
/// persons' PSMs, then the greedy coverage/score pick of `count` images.
SelectionResult select_for_dataset(const Dataset& dataset,
                                   const std::vector<std::string>& pool, std::size_t count);

/// The target person's supervised map on one common image: built from
/// fixations when available (or demanded), else the person's stored raster.
SaliencyMap supervision_map(const Dataset& dataset, const RunConfig& cfg,
                            const std::string& person, const std::string& image);

/// Area-average when shrinking, bilinear when enlarging.
SaliencyMap resample_directed(const SaliencyMap& map, std::size_t d1, std::size_t d2);

/// Stacks the training persons' PSMs of one image into a (P x d1' x d2')
/// input tensor at the working resolution.
DenseTensor stack_inputs(const Dataset& dataset, const std::vector<std::string>& training_persons,
                         const std::string& image, std::size_t d1, std::size_t d2);

struct RunArtifacts {
  ImageSplit split;
  SelectionResult selection;
  EvalReport report;
  std::map<std::string, std::string> model_paths;  // target person -> file
  std::vector<std::string> flags;                  // degenerate-run notes
};

/// Full experiment: AIS -> per-target fit -> prediction on the held-out test
/// images -> evaluation of the regression and both baselines. Writes
/// models/, predictions/, selection.json, report.csv and report.json under
/// cfg.out_dir. Deterministic for fixed seeds; timestamps go only to
/// run.log.
RunArtifacts run_experiment(Dataset& dataset, const RunConfig& cfg);

/// Fits every (rank, lambda) cell of cfg.sweep_grid on the common images and
/// evaluates on the test images, aggregated over target persons. Writes
/// sweep.csv under cfg.out_dir and returns the rows sorted by (rank, lambda).
std::vector<SweepRow> sweep_experiment(Dataset& dataset, const RunConfig& cfg);

void write_selection_json(const std::string& path, const SelectionResult& selection);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace psm
