#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psm/regression.hpp"
#include "psm/saliency.hpp"
#include "psm/selection.hpp"
#include "psm/tensor.hpp"

namespace psm {

/// Seeded synthetic-dataset generator. Persons are linear mixtures of K
/// latent component maps (sums of axis-aligned Gaussian blobs) modulated per
/// image, plus an image-specific content map, additive noise, and unit-max
/// normalization — deliberately within the representational reach of a
/// low-rank weight tensor so recovery tests are well posed.
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t training_persons = 5;
  std::size_t target_persons = 1;
  std::size_t images = 40;
  std::size_t categories = 4;
  std::size_t d1 = 32;
  std::size_t d2 = 24;
  std::size_t components = 3;  // K, capped at 8
  double noise = 0.0;          // sigma_n
  std::size_t planted_rank = 2;
  double content_weight = 0.5;
  std::size_t fixations_per_image = 2000;

  void validate() const;
};

struct SynthPersons {
  std::vector<SaliencyMap> components;          // K latent maps
  std::vector<std::vector<double>> mixing;      // per person (training, then targets)
  std::vector<std::string> training_ids;
  std::vector<std::string> target_ids;
};

/// Draws the latent components and per-person mixing vectors.
SynthPersons generate_persons(const SynthConfig& cfg);

/// Deterministic PSM of one person on one image (noise is seeded per
/// (person, image) pair, so any map can be regenerated independently).
SaliencyMap synth_psm(const SynthConfig& cfg, const SynthPersons& persons,
                      std::size_t person_index, std::size_t image_index);

/// Noise-free planted regression instance: random non-negative rank-R*
/// factors and inputs, targets = <input_i, W*>_3 (+ Gaussian noise clamped
/// at zero when cfg.noise > 0). The generator doubles as the recovery
/// oracle.
struct PlantedInstance {
  TrainingSet data;
  CpFactors truth;
};
PlantedInstance plant_regression_instance(const SynthConfig& cfg);

/// Draws `count` pixel positions proportionally to map mass via the inverse
/// CDF over the flattened normalized map.
FixationSet sample_fixations(const SaliencyMap& map, std::size_t count, std::uint64_t seed,
                             const std::string& image_id = "", const std::string& person_id = "");

/// Materializes a full dataset under `out_dir` in the pipeline's manifest
/// format: PSM rasters for every person and image, fixation CSVs for the
/// target persons, object annotations, and manifest.json.
void write_dataset(const SynthConfig& cfg, const std::string& out_dir);

/// Variant whose target-person maps are exact contractions of the stacked
/// training maps with a hidden rank-R* weight tensor (targets normalized by
/// one global constant, so the linear relation survives bit-for-bit). Used
/// by end-to-end recovery tests.
void write_planted_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace psm
