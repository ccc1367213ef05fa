#include "psm/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "psm/common.hpp"

namespace psm {

namespace fs = std::filesystem;

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  nlohmann::json doc;
  doc["version"] = manifest.version;
  doc["images"] = nlohmann::json::array();
  for (const ImageRecord& image : manifest.images)
    doc["images"].push_back({{"id", image.id}, {"d1", image.d1}, {"d2", image.d2}});
  doc["persons"] = nlohmann::json::array();
  for (const PersonRecord& person : manifest.persons)
    doc["persons"].push_back(
        {{"id", person.id}, {"role", person.is_training ? "training" : "target"}});
  doc["psms"] = manifest.psm_paths;
  doc["fixations"] = manifest.fixation_files;
  doc["annotations"] = manifest.annotation_files;
  if (manifest.usm_source == "provided")
    doc["usm"] = {{"source", "provided"}, {"paths", manifest.usm_paths}};
  else
    doc["usm"] = {{"source", "mean"}};

  std::ofstream out(path);
  if (!out) throw ValidationError("save_manifest: cannot open " + path);
  out << doc.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_manifest: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_manifest: " + path + ": " + e.what());
  }

  DatasetManifest manifest;
  try {
    manifest.version = doc.at("version").get<int>();
    if (manifest.version != 1)
      throw ValidationError("load_manifest: " + path + ": unknown version " +
                            std::to_string(manifest.version));
    for (const auto& image : doc.at("images"))
      manifest.images.push_back(ImageRecord{image.at("id").get<std::string>(),
                                            image.at("d1").get<std::size_t>(),
                                            image.at("d2").get<std::size_t>()});
    for (const auto& person : doc.at("persons")) {
      const std::string role = person.at("role").get<std::string>();
      if (role != "training" && role != "target")
        throw ValidationError("load_manifest: " + path + ": unknown person role '" + role + "'");
      manifest.persons.push_back(
          PersonRecord{person.at("id").get<std::string>(), role == "training"});
    }
    manifest.psm_paths =
        doc.at("psms").get<std::map<std::string, std::map<std::string, std::string>>>();
    manifest.fixation_files = doc.value("fixations", std::vector<std::string>{});
    manifest.annotation_files = doc.value("annotations", std::vector<std::string>{});
    if (doc.contains("usm")) {
      manifest.usm_source = doc["usm"].value("source", "mean");
      if (manifest.usm_source == "provided")
        manifest.usm_paths = doc["usm"].at("paths").get<std::map<std::string, std::string>>();
      else if (manifest.usm_source != "mean")
        throw ValidationError("load_manifest: " + path + ": unknown usm source '" +
                              manifest.usm_source + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_manifest: " + path + ": " + e.what());
  }
  return manifest;
}

namespace {

// Sidecar + byte-length check without touching the raster payload.
void check_raster_file(const fs::path& raster, const ImageRecord& image) {
  std::ifstream side(raster.string() + ".json");
  if (!side)
    throw ValidationError("ingest: missing sidecar " + raster.string() + ".json");
  nlohmann::json sidecar;
  try {
    side >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("ingest: bad sidecar " + raster.string() + ".json: " + e.what());
  }
  const std::size_t d1 = sidecar.value("d1", std::size_t{0});
  const std::size_t d2 = sidecar.value("d2", std::size_t{0});
  if (d1 != image.d1 || d2 != image.d2)
    throw ValidationError("ingest: " + raster.string() + " is " + std::to_string(d1) + "x" +
                          std::to_string(d2) + " but image '" + image.id + "' is " +
                          std::to_string(image.d1) + "x" + std::to_string(image.d2));
  std::error_code ec;
  const auto actual = fs::file_size(raster, ec);
  if (ec) throw ValidationError("ingest: missing raster " + raster.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(d1) * d2 * 4;
  if (actual != expected)
    throw ValidationError("ingest: " + raster.string() + " has " + std::to_string(actual) +
                          " bytes, expected " + std::to_string(expected));
}

}  // namespace

Dataset Dataset::ingest(const std::string& manifest_path) {
  Dataset dataset;
  dataset.manifest_ = load_manifest(manifest_path);
  dataset.base_dir_ = fs::path(manifest_path).parent_path().string();
  const fs::path base(dataset.base_dir_);

  if (dataset.manifest_.images.empty()) throw ValidationError("ingest: manifest lists no images");
  for (const ImageRecord& image : dataset.manifest_.images) {
    if (image.d1 == 0 || image.d2 == 0)
      throw ValidationError("ingest: image '" + image.id + "' has a zero extent");
    if (!dataset.image_index_.emplace(image.id, image).second)
      throw ValidationError("ingest: duplicate image id '" + image.id + "'");
  }
  for (const PersonRecord& person : dataset.manifest_.persons)
    if (!dataset.person_is_training_.emplace(person.id, person.is_training).second)
      throw ValidationError("ingest: duplicate person id '" + person.id + "'");
  if (dataset.person_is_training_.empty())
    throw ValidationError("ingest: manifest lists no persons");

  // Every person needs a dimension-checked raster for every image.
  for (const PersonRecord& person : dataset.manifest_.persons) {
    const auto person_it = dataset.manifest_.psm_paths.find(person.id);
    if (person_it == dataset.manifest_.psm_paths.end())
      throw ValidationError("ingest: no PSM entries for person '" + person.id + "'");
    for (const ImageRecord& image : dataset.manifest_.images) {
      const auto path_it = person_it->second.find(image.id);
      if (path_it == person_it->second.end())
        throw ValidationError("ingest: person '" + person.id + "' has no PSM for image '" +
                              image.id + "'");
      check_raster_file(base / path_it->second, image);
    }
  }
  if (dataset.manifest_.usm_source == "provided")
    for (const ImageRecord& image : dataset.manifest_.images) {
      const auto it = dataset.manifest_.usm_paths.find(image.id);
      if (it == dataset.manifest_.usm_paths.end())
        throw ValidationError("ingest: no provided USM for image '" + image.id + "'");
      check_raster_file(base / it->second, image);
    }

  for (const std::string& relative : dataset.manifest_.fixation_files) {
    for (FixationSet& set : read_fixations_csv((base / relative).string())) {
      const auto image_it = dataset.image_index_.find(set.image_id);
      if (image_it == dataset.image_index_.end())
        throw ValidationError("ingest: " + relative + " references unknown image '" +
                              set.image_id + "'");
      if (!dataset.person_is_training_.count(set.person_id))
        throw ValidationError("ingest: " + relative + " references unknown person '" +
                              set.person_id + "'");
      for (const Fixation& p : set.points)
        if (p.y >= image_it->second.d1 || p.x >= image_it->second.d2)
          throw ValidationError("ingest: " + relative + " has fixation (" + std::to_string(p.x) +
                                "," + std::to_string(p.y) + ") outside image '" + set.image_id +
                                "'");
      const auto key = std::make_pair(set.person_id, set.image_id);
      auto [slot, inserted] = dataset.fixation_index_.try_emplace(key, std::move(set));
      if (!inserted)
        slot->second.points.insert(slot->second.points.end(), set.points.begin(),
                                   set.points.end());
    }
  }

  for (const std::string& relative : dataset.manifest_.annotation_files) {
    for (ObjectAnnotation& annotation : read_annotations_jsonl((base / relative).string())) {
      const auto image_it = dataset.image_index_.find(annotation.image_id);
      if (image_it == dataset.image_index_.end())
        throw ValidationError("ingest: " + relative + " annotates unknown image '" +
                              annotation.image_id + "'");
      const ImageRecord& image = image_it->second;
      if (annotation.bbox.row + annotation.bbox.h > image.d1 ||
          annotation.bbox.col + annotation.bbox.w > image.d2)
        throw ValidationError("ingest: " + relative + " has an out-of-bounds box on image '" +
                              annotation.image_id + "'");
      if (annotation.category < 1)
        throw ValidationError("ingest: " + relative + " has category < 1 on image '" +
                              annotation.image_id + "'");
      dataset.annotations_.push_back(std::move(annotation));
    }
  }
  return dataset;
}

std::vector<std::string> Dataset::image_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, record] : image_index_) ids.push_back(id);
  return ids;
}

std::vector<std::string> Dataset::training_person_ids() const {
  std::vector<std::string> ids;
  for (const PersonRecord& person : manifest_.persons)
    if (person.is_training) ids.push_back(person.id);
  return ids;
}

std::vector<std::string> Dataset::target_person_ids() const {
  std::vector<std::string> ids;
  for (const PersonRecord& person : manifest_.persons)
    if (!person.is_training) ids.push_back(person.id);
  return ids;
}

const ImageRecord& Dataset::image(const std::string& id) const {
  const auto it = image_index_.find(id);
  if (it == image_index_.end()) throw ValidationError("dataset: unknown image '" + id + "'");
  return it->second;
}

const SaliencyMap& Dataset::psm(const std::string& person, const std::string& image) const {
  const auto key = std::make_pair(person, image);
  const auto cached = raster_cache_.find(key);
  if (cached != raster_cache_.end()) return cached->second;

  const auto person_it = manifest_.psm_paths.find(person);
  if (person_it == manifest_.psm_paths.end() || !person_it->second.count(image))
    throw ValidationError("dataset: no PSM for person '" + person + "', image '" + image + "'");
  SaliencyMap map = read_map((fs::path(base_dir_) / person_it->second.at(image)).string());
  return raster_cache_.emplace(key, std::move(map)).first->second;
}

SaliencyMap Dataset::usm(const std::string& image) const {
  if (manifest_.usm_source == "provided")
    return read_map((fs::path(base_dir_) / manifest_.usm_paths.at(image)).string());
  std::vector<SaliencyMap> maps;
  for (const std::string& person : training_person_ids()) maps.push_back(psm(person, image));
  return usm_mean(maps);
}

bool Dataset::has_fixations(const std::string& person, const std::string& image) const {
  return fixation_index_.count(std::make_pair(person, image)) > 0;
}

const FixationSet& Dataset::fixations(const std::string& person, const std::string& image) const {
  access_log_.emplace_back(person, image);
  const auto person_it = person_is_training_.find(person);
  if (person_it == person_is_training_.end())
    throw ValidationError("dataset: unknown person '" + person + "'");
  if (strict_ && common_known_ && !person_it->second && !common_images_.contains(image))
    throw ValidationError("dataset: strict mode forbids reading target '" + person +
                          "' fixations for non-common image '" + image + "'");
  const auto it = fixation_index_.find(std::make_pair(person, image));
  if (it == fixation_index_.end())
    throw ValidationError("dataset: no fixations for person '" + person + "', image '" + image +
                          "'");
  return it->second;
}

void Dataset::set_common_images(const std::vector<std::string>& ids) {
  common_images_ = std::set<std::string>(ids.begin(), ids.end());
  common_known_ = true;
}

}  // namespace psm
