#include "psm/selection.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "psm/common.hpp"

namespace psm {

double object_variance(std::span<const SaliencyMap> person_crops) {
  if (person_crops.size() < 2) {
    std::cerr << "warning: object_variance needs at least 2 persons, returning 0\n";
    return 0.0;
  }
  const std::size_t d1 = person_crops.front().d1;
  const std::size_t d2 = person_crops.front().d2;
  for (const SaliencyMap& c : person_crops)
    if (c.d1 != d1 || c.d2 != d2) throw ValidationError("object_variance: crop geometry mismatch");

  const std::size_t pixels = d1 * d2;
  const double person_count = static_cast<double>(person_crops.size());
  std::vector<double> mean(pixels, 0.0);
  for (const SaliencyMap& c : person_crops)
    for (std::size_t i = 0; i < pixels; ++i) mean[i] += c.values[i];
  for (double& v : mean) v /= person_count;

  double total = 0.0;
  for (const SaliencyMap& c : person_crops) {
    for (std::size_t i = 0; i < pixels; ++i) {
      const double dev = c.values[i] - mean[i];
      total += dev * dev;
    }
  }
  return total / (static_cast<double>(pixels) * person_count);
}

std::map<std::string, ImageScore> image_scores(
    std::span<const ObjectAnnotation> annotations,
    const std::map<std::string, std::map<std::string, SaliencyMap>>& psms_per_person) {
  std::map<std::string, ImageScore> scores;
  // Every annotated image gets a slot even if it ends up with q-bar = 0.
  for (const auto& [person, maps] : psms_per_person)
    for (const auto& [image_id, map] : maps) scores.try_emplace(image_id);

  for (const ObjectAnnotation& annotation : annotations) {
    std::vector<SaliencyMap> crops;
    crops.reserve(psms_per_person.size());
    for (const auto& [person, maps] : psms_per_person) {
      const auto it = maps.find(annotation.image_id);
      if (it == maps.end())
        throw ValidationError("image_scores: person '" + person + "' has no PSM for image '" +
                              annotation.image_id + "'");
      crops.push_back(crop(it->second, annotation.bbox));
    }
    const double q = object_variance(crops);
    ImageScore& score = scores[annotation.image_id];
    auto [it, inserted] = score.per_category.try_emplace(annotation.category, q);
    if (!inserted && q > it->second) it->second = q;  // largest instance wins
  }

  for (auto& [image_id, score] : scores) {
    score.total = 0.0;
    for (const auto& [category, q] : score.per_category) score.total += q;
  }
  return scores;
}

SelectionResult select_common_images(const std::map<std::string, ImageScore>& scores,
                                     std::size_t count) {
  if (count == 0) throw ValidationError("select_common_images: count must be >= 1");
  if (count > scores.size())
    throw ValidationError("select_common_images: requested " + std::to_string(count) +
                          " images but only " + std::to_string(scores.size()) + " are scored");

  SelectionResult result;
  for (const auto& [image_id, score] : scores) result.scores[image_id] = score.total;

  std::set<std::string> remaining;
  for (const auto& [image_id, score] : scores) remaining.insert(image_id);

  while (result.chosen.size() < count) {
    std::string best;
    std::size_t best_new = 0;
    double best_score = 0.0;
    bool have_best = false;
    // std::set iterates in ascending id order, so on full ties the smaller
    // id is kept by the strict comparisons below.
    for (const std::string& candidate : remaining) {
      const ImageScore& score = scores.at(candidate);
      std::size_t new_categories = 0;
      for (const auto& [category, q] : score.per_category)
        if (!result.covered_categories.contains(category)) ++new_categories;
      if (!have_best || new_categories > best_new ||
          (new_categories == best_new && score.total > best_score)) {
        best = candidate;
        best_new = new_categories;
        best_score = score.total;
        have_best = true;
      }
    }
    result.chosen.push_back(best);
    remaining.erase(best);
    for (const auto& [category, q] : scores.at(best).per_category)
      result.covered_categories.insert(category);
  }
  return result;
}

void write_annotations_jsonl(const std::string& path,
                             std::span<const ObjectAnnotation> annotations) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_annotations_jsonl: cannot open " + path);
  for (const ObjectAnnotation& a : annotations) {
    nlohmann::json line = {{"image_id", a.image_id}, {"category", a.category},
                           {"row", a.bbox.row},     {"col", a.bbox.col},
                           {"h", a.bbox.h},         {"w", a.bbox.w}};
    out << line.dump() << "\n";
  }
}

std::vector<ObjectAnnotation> read_annotations_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("read_annotations_jsonl: cannot open " + path);
  std::vector<ObjectAnnotation> annotations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
      ObjectAnnotation a;
      a.image_id = parsed.at("image_id").get<std::string>();
      a.category = parsed.at("category").get<int>();
      a.bbox.row = parsed.at("row").get<std::size_t>();
      a.bbox.col = parsed.at("col").get<std::size_t>();
      a.bbox.h = parsed.at("h").get<std::size_t>();
      a.bbox.w = parsed.at("w").get<std::size_t>();
      if (a.bbox.h == 0 || a.bbox.w == 0)
        throw ValidationError("annotation bbox must have h, w >= 1");
      annotations.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("read_annotations_jsonl: " + path + " line " +
                            std::to_string(line_no) + ": " + e.what());
    }
  }
  return annotations;
}

}  // namespace psm
