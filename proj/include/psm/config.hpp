#pragma once

#include <string>
#include <vector>

#include "psm/regression.hpp"

namespace psm {

/// Experiment configuration. File keys map 1:1 onto the fields:
///   [run]        common_images, split_seed, test_fraction, strict, out,
///                supervision ("auto"|"fixations"|"rasters"), gt_sigma
///                (0 = image width / 25), similarity_temperature
///   [regression] rank, lambda, max_sweeps, rel_tol, seed, working_d1,
///                working_d2, center_targets
///   [sweep]      ranks = [...], lambdas = [...] (cross product), or
///                paper_grid = true
/// Accepted as JSON ({"run": {...}, "regression": {...}, "sweep": {...}})
/// or as a flat TOML subset (sections, scalars, arrays of numbers).
struct RunConfig {
  std::size_t common_images = 20;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.3125;  // mirrors the 500-of-1600 test share
  bool strict = false;
  std::string out_dir = "out";
  std::string supervision = "auto";
  double gt_sigma = 0.0;
  double similarity_temperature = 0.1;
  RegressionConfig regression;
  std::vector<GridCell> sweep_grid;

  void validate() const;
};

RunConfig load_run_config(const std::string& path);

}  // namespace psm
