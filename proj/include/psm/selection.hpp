#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "psm/saliency.hpp"

namespace psm {

struct ObjectAnnotation {
  std::string image_id;
  int category = 0;  // 1..J
  BBox bbox;
};

struct ImageScore {
  double total = 0.0;                   // q-bar: sum over categories
  std::map<int, double> per_category;   // max over instances of each category
};

struct SelectionResult {
  std::vector<std::string> chosen;      // ordered as picked, length I
  std::map<std::string, double> scores; // q-bar per scored image
  std::set<int> covered_categories;
};

/// Inter-person PSM variance over one object crop:
///   q = (1 / (h*w*P)) * sum_p sum_pixels (S_p - mean_over_persons)^2.
/// Needs P >= 2 to be meaningful; with fewer crops it returns 0 and warns.
double object_variance(std::span<const SaliencyMap> person_crops);

/// Per-image selection scores. `psms_per_person` maps person -> image -> PSM.
/// A category absent from an image scores 0; multiple instances of the same
/// category keep the largest variance. Every listed person must provide a
/// PSM for every annotated image.
std::map<std::string, ImageScore> image_scores(
    std::span<const ObjectAnnotation> annotations,
    const std::map<std::string, std::map<std::string, SaliencyMap>>& psms_per_person);

/// Greedy pick of I common images: each step takes the unchosen image
/// maximizing (newly covered categories, q-bar) lexicographically, ties
/// broken by smaller image id. Deterministic and independent of input
/// iteration order.
SelectionResult select_common_images(const std::map<std::string, ImageScore>& scores,
                                     std::size_t count);

// Annotations file format: JSON lines, one object per line:
// {"image_id":..., "category":..., "row":..., "col":..., "h":..., "w":...}
void write_annotations_jsonl(const std::string& path, std::span<const ObjectAnnotation> annotations);
std::vector<ObjectAnnotation> read_annotations_jsonl(const std::string& path);

}  // namespace psm
