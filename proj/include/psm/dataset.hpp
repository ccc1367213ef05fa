#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psm/saliency.hpp"
#include "psm/selection.hpp"

namespace psm {

struct ImageRecord {
  std::string id;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
};

struct PersonRecord {
  std::string id;
  bool is_training = true;
};

/// Parsed manifest.json. All paths are stored relative to the manifest's
/// directory. Format:
///   {"version": 1,
///    "images": [{"id", "d1", "d2"}...],
///    "persons": [{"id", "role": "training"|"target"}...],
///    "psms": {person: {image: relpath}},
///    "fixations": [relpath...],
///    "annotations": [relpath...],
///    "usm": {"source": "mean"} or {"source": "provided", "paths": {image: relpath}}}
struct DatasetManifest {
  int version = 1;
  std::vector<ImageRecord> images;
  std::vector<PersonRecord> persons;
  std::map<std::string, std::map<std::string, std::string>> psm_paths;
  std::vector<std::string> fixation_files;
  std::vector<std::string> annotation_files;
  std::string usm_source = "mean";
  std::map<std::string, std::string> usm_paths;
};

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

/// Validated dataset handle with lazy raster loading. Ingestion checks that
/// every referenced file exists, that sidecar dimensions match the image
/// records, and that raster byte lengths are exact — without reading raster
/// payloads. Not thread-safe (the raster cache and access log are mutated on
/// read).
class Dataset {
 public:
  static Dataset ingest(const std::string& manifest_path);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<ObjectAnnotation>& annotations() const { return annotations_; }

  std::vector<std::string> image_ids() const;
  std::vector<std::string> training_person_ids() const;
  std::vector<std::string> target_person_ids() const;
  const ImageRecord& image(const std::string& id) const;

  const SaliencyMap& psm(const std::string& person, const std::string& image) const;
  SaliencyMap usm(const std::string& image) const;

  bool has_fixations(const std::string& person, const std::string& image) const;
  /// Reads one person's fixations for one image. Every call is recorded in
  /// the access log; in strict mode, once the common-image set is announced,
  /// reading a target person's fixations for a non-common image throws.
  const FixationSet& fixations(const std::string& person, const std::string& image) const;

  void set_strict(bool strict) { strict_ = strict; }
  void set_common_images(const std::vector<std::string>& ids);

  using AccessLog = std::vector<std::pair<std::string, std::string>>;  // (person, image)
  const AccessLog& fixation_access_log() const { return access_log_; }

 private:
  std::string base_dir_;
  DatasetManifest manifest_;
  std::map<std::string, ImageRecord> image_index_;
  std::map<std::string, bool> person_is_training_;
  std::vector<ObjectAnnotation> annotations_;
  std::map<std::pair<std::string, std::string>, FixationSet> fixation_index_;
  bool strict_ = false;
  std::set<std::string> common_images_;
  bool common_known_ = false;

  mutable std::map<std::pair<std::string, std::string>, SaliencyMap> raster_cache_;
  mutable AccessLog access_log_;
};

}  // namespace psm
