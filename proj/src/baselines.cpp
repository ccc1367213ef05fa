#include "psm/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "psm/common.hpp"
#include "psm/metrics.hpp"

namespace psm {

PersonWeights::PersonWeights(std::vector<double> weights_in) : weights(std::move(weights_in)) {
  if (weights.empty()) throw ValidationError("PersonWeights: empty");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("PersonWeights: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ValidationError("PersonWeights: weights sum to " + std::to_string(sum));
}

PersonWeights similarity_weights(std::span<const SaliencyMap> target_gt_on_common,
                                 std::span<const std::vector<SaliencyMap>> training_on_common,
                                 double temperature) {
  if (training_on_common.empty()) throw ValidationError("similarity_weights: no training persons");
  if (target_gt_on_common.empty()) throw ValidationError("similarity_weights: no common images");
  if (!(temperature > 0.0)) throw ValidationError("similarity_weights: temperature must be > 0");

  const std::size_t person_count = training_on_common.size();
  std::vector<double> similarity(person_count, 0.0);
  std::vector<bool> scored(person_count, false);
  double lowest = 0.0;
  bool any = false;

  for (std::size_t p = 0; p < person_count; ++p) {
    if (training_on_common[p].size() != target_gt_on_common.size())
      throw ValidationError("similarity_weights: person " + std::to_string(p) +
                            " has a different common-image count");
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < target_gt_on_common.size(); ++i) {
      try {
        sum += cross_correlation(training_on_common[p][i], target_gt_on_common[i]);
        ++used;
      } catch (const ValidationError&) {
        // constant map; skip the pair
      }
    }
    if (used > 0) {
      similarity[p] = sum / static_cast<double>(used);
      scored[p] = true;
      lowest = any ? std::min(lowest, similarity[p]) : similarity[p];
      any = true;
    }
  }
  if (!any)
    throw ValidationError("similarity_weights: every common-image pair was excluded");
  for (std::size_t p = 0; p < person_count; ++p)
    if (!scored[p]) similarity[p] = lowest;

  // Softmax with the max shifted out for stability.
  const double top = *std::max_element(similarity.begin(), similarity.end());
  std::vector<double> weights(person_count);
  double norm = 0.0;
  for (std::size_t p = 0; p < person_count; ++p) {
    weights[p] = std::exp((similarity[p] - top) / temperature);
    norm += weights[p];
  }
  for (double& w : weights) w /= norm;
  return PersonWeights(std::move(weights));
}

SaliencyMap weighted_average_psm(const PersonWeights& weights,
                                 std::span<const SaliencyMap> person_maps) {
  if (weights.weights.size() != person_maps.size())
    throw ValidationError("weighted_average_psm: weight/map count mismatch");
  const std::size_t d1 = person_maps.front().d1;
  const std::size_t d2 = person_maps.front().d2;
  std::vector<double> out(d1 * d2, 0.0);
  for (std::size_t p = 0; p < person_maps.size(); ++p) {
    const SaliencyMap& m = person_maps[p];
    if (m.d1 != d1 || m.d2 != d2) throw ValidationError("weighted_average_psm: geometry mismatch");
    const double w = weights.weights[p];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * m.values[i];
  }
  return SaliencyMap(d1, d2, std::move(out));
}

PersonWeights uniform_weights(std::size_t count) {
  if (count == 0) throw ValidationError("uniform_weights: count must be >= 1");
  // Make the weights sum to exactly 1 despite rounding.
  std::vector<double> w(count, 1.0 / static_cast<double>(count));
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < count; ++i) sum += w[i];
  w[count - 1] = 1.0 - sum;
  return PersonWeights(std::move(w));
}

}  // namespace psm
