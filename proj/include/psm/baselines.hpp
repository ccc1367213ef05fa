#pragma once

#include <span>
#include <vector>

#include "psm/saliency.hpp"

namespace psm {

/// Convex weights over training persons (non-negative, sum to 1).
struct PersonWeights {
  std::vector<double> weights;

  PersonWeights() = default;
  explicit PersonWeights(std::vector<double> weights_in);  // validates
};

/// Similarity-of-gaze weighting: s_p is the mean cross-correlation between
/// the target's ground truth and person p's map over the common images;
/// weights are softmax(s_p / temperature). Pairs where either map is
/// constant are skipped; if every pair of some person is skipped the person
/// scores the lowest observed similarity. Throws when nothing is comparable.
PersonWeights similarity_weights(std::span<const SaliencyMap> target_gt_on_common,
                                 std::span<const std::vector<SaliencyMap>> training_on_common,
                                 double temperature = 0.1);

/// Pixel-wise sum_p w_p * map_p.
SaliencyMap weighted_average_psm(const PersonWeights& weights,
                                 std::span<const SaliencyMap> person_maps);

/// Equal weights over `count` persons.
PersonWeights uniform_weights(std::size_t count);

}  // namespace psm
