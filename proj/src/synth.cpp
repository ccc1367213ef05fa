#include "psm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "psm/common.hpp"
#include "psm/dataset.hpp"

namespace psm {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t x = base;
  x ^= (a + 0x9E3779B97F4A7C15ULL) * 0xBF58476D1CE4E5B9ULL;
  x ^= (b + 0xC2B2AE3D27D4EB4FULL) * 0x94D049BB133111EBULL;
  return x;
}

std::string zero_pad(std::size_t value, int width) {
  std::string text = std::to_string(value);
  while (static_cast<int>(text.size()) < width) text.insert(text.begin(), '0');
  return text;
}

// Adds 1..max_blobs axis-aligned Gaussian blobs. Separable blobs keep the
// matrix rank of each component low, which is what makes low-rank weight
// recovery well posed.
void add_blobs(std::vector<double>& values, std::size_t d1, std::size_t d2, Rng& rng,
               std::size_t min_blobs, std::size_t max_blobs) {
  const std::size_t blobs = min_blobs + rng.uniform_below(max_blobs - min_blobs + 1);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double r0 = rng.uniform(0.0, static_cast<double>(d1 - 1));
    const double c0 = rng.uniform(0.0, static_cast<double>(d2 - 1));
    const double sr = rng.uniform(static_cast<double>(d1) / 10.0, static_cast<double>(d1) / 5.0);
    const double sc = rng.uniform(static_cast<double>(d2) / 10.0, static_cast<double>(d2) / 5.0);
    const double amplitude = rng.uniform(0.5, 1.0);
    for (std::size_t r = 0; r < d1; ++r) {
      const double dr = (static_cast<double>(r) - r0) / sr;
      const double row_term = std::exp(-0.5 * dr * dr);
      for (std::size_t c = 0; c < d2; ++c) {
        const double dc = (static_cast<double>(c) - c0) / sc;
        values[r * d2 + c] += amplitude * row_term * std::exp(-0.5 * dc * dc);
      }
    }
  }
}

SaliencyMap content_map(const SynthConfig& cfg, std::size_t image_index) {
  Rng rng(mix_seed(cfg.seed, 500 + image_index));
  std::vector<double> values(cfg.d1 * cfg.d2, 0.0);
  add_blobs(values, cfg.d1, cfg.d2, rng, 1, 2);
  return SaliencyMap(cfg.d1, cfg.d2, std::move(values));
}

std::vector<double> image_gains(const SynthConfig& cfg, std::size_t image_index) {
  Rng rng(mix_seed(cfg.seed, 1000 + image_index));
  std::vector<double> gains(cfg.components);
  for (double& g : gains) g = rng.uniform(0.3, 1.0);
  return gains;
}

}  // namespace

void SynthConfig::validate() const {
  if (training_persons == 0 || images == 0 || categories == 0 || components == 0 ||
      planted_rank == 0 || d1 == 0 || d2 == 0)
    throw ValidationError("SynthConfig: all counts must be >= 1");
  if (components > 8) throw ValidationError("SynthConfig: components capped at 8");
  if (!(noise >= 0.0)) throw ValidationError("SynthConfig: noise must be >= 0");
  if (!(content_weight >= 0.0)) throw ValidationError("SynthConfig: content_weight must be >= 0");
}

SynthPersons generate_persons(const SynthConfig& cfg) {
  cfg.validate();
  SynthPersons persons;
  Rng rng(mix_seed(cfg.seed, 1));
  for (std::size_t k = 0; k < cfg.components; ++k) {
    std::vector<double> values(cfg.d1 * cfg.d2, 0.0);
    add_blobs(values, cfg.d1, cfg.d2, rng, 2, 3);
    persons.components.emplace_back(cfg.d1, cfg.d2, std::move(values));
  }
  // Heterogeneous gaze profiles. Training persons attend dominantly to one
  // component (round-robin) with a broad attention floor on the rest, so the
  // person average sits far from any single profile. Target persons are
  // focused bi-dominant gazers with almost no background attention: no
  // convex combination of training maps reaches below the shared floor, so
  // reweighting baselines cannot represent them while a signed linear model
  // can.
  Rng mix_rng(mix_seed(cfg.seed, 2));
  const std::size_t total = cfg.training_persons + cfg.target_persons;
  for (std::size_t p = 0; p < total; ++p) {
    std::vector<double> mixing(cfg.components);
    const bool is_target = p >= cfg.training_persons;
    for (double& m : mixing) m = is_target ? mix_rng.uniform(0.0, 0.05)
                                           : mix_rng.uniform(0.15, 0.35);
    mixing[p % cfg.components] = mix_rng.uniform(0.8, 1.2);
    if (is_target) mixing[(p + 1) % cfg.components] = mix_rng.uniform(0.5, 0.8);
    persons.mixing.push_back(std::move(mixing));
  }
  for (std::size_t p = 0; p < cfg.training_persons; ++p)
    persons.training_ids.push_back("p" + zero_pad(p, 2));
  for (std::size_t t = 0; t < cfg.target_persons; ++t)
    persons.target_ids.push_back("t" + zero_pad(t, 2));
  return persons;
}

SaliencyMap synth_psm(const SynthConfig& cfg, const SynthPersons& persons,
                      std::size_t person_index, std::size_t image_index) {
  if (person_index >= persons.mixing.size())
    throw ValidationError("synth_psm: person index out of range");
  if (image_index >= cfg.images) throw ValidationError("synth_psm: image index out of range");

  const std::vector<double>& mixing = persons.mixing[person_index];
  const std::vector<double> gains = image_gains(cfg, image_index);
  std::vector<double> values(cfg.d1 * cfg.d2, 0.0);
  for (std::size_t k = 0; k < cfg.components; ++k) {
    const double coefficient = mixing[k] * gains[k];
    const SaliencyMap& component = persons.components[k];
    for (std::size_t j = 0; j < values.size(); ++j) values[j] += coefficient * component.values[j];
  }
  if (cfg.content_weight > 0.0) {
    const SaliencyMap content = content_map(cfg, image_index);
    for (std::size_t j = 0; j < values.size(); ++j)
      values[j] += cfg.content_weight * content.values[j];
  }
  if (cfg.noise > 0.0) {
    Rng noise_rng(mix_seed(cfg.seed, 7000 + person_index, image_index));
    for (double& v : values) v = std::max(0.0, v + cfg.noise * noise_rng.normal());
  }
  return normalize_unit_max(SaliencyMap(cfg.d1, cfg.d2, std::move(values)));
}

PlantedInstance plant_regression_instance(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 77));
  std::vector<Matrix> factors;
  for (std::size_t extent : {cfg.training_persons, cfg.d1, cfg.d2, cfg.d1, cfg.d2}) {
    Matrix f(extent, cfg.planted_rank);
    for (std::size_t u = 0; u < extent; ++u)
      for (std::size_t r = 0; r < cfg.planted_rank; ++r) f(u, r) = rng.uniform(0.1, 1.0);
    factors.push_back(std::move(f));
  }
  CpFactors truth(cfg.planted_rank, std::move(factors));

  DenseTensor inputs = DenseTensor::zeros({cfg.images, cfg.training_persons, cfg.d1, cfg.d2});
  for (double& v : inputs.values) v = rng.uniform01();
  DenseTensor targets = DenseTensor::zeros({cfg.images, cfg.d1, cfg.d2});
  const std::size_t in_block = cfg.training_persons * cfg.d1 * cfg.d2;
  const std::size_t out_block = cfg.d1 * cfg.d2;
  for (std::size_t i = 0; i < cfg.images; ++i) {
    DenseTensor x({cfg.training_persons, cfg.d1, cfg.d2},
                  {inputs.values.begin() + static_cast<std::ptrdiff_t>(i * in_block),
                   inputs.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * in_block)});
    DenseTensor y = contract_leading(x, truth, 3);
    for (std::size_t j = 0; j < out_block; ++j) {
      double value = y.values[j];
      if (cfg.noise > 0.0) value += cfg.noise * rng.normal();
      targets.values[i * out_block + j] = std::max(0.0, value);
    }
  }
  PlantedInstance instance{TrainingSet(std::move(inputs), std::move(targets)), std::move(truth)};
  instance.data.validate(/*require_non_negative=*/true);
  return instance;
}

FixationSet sample_fixations(const SaliencyMap& map, std::size_t count, std::uint64_t seed,
                             const std::string& image_id, const std::string& person_id) {
  if (count == 0) throw ValidationError("sample_fixations: count must be >= 1");
  std::vector<double> cdf(map.values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    total += map.values[i];
    cdf[i] = total;
  }
  if (total == 0.0) throw ValidationError("sample_fixations: all-zero map");

  Rng rng(seed);
  FixationSet set{image_id, person_id, {}};
  set.points.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double u = rng.uniform01() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t flat = std::min(static_cast<std::size_t>(it - cdf.begin()),
                                      map.values.size() - 1);
    set.points.push_back(Fixation{flat % map.d2, flat / map.d2});
  }
  return set;
}

namespace {

std::vector<ObjectAnnotation> synth_annotations(const SynthConfig& cfg,
                                                const std::vector<std::string>& image_ids) {
  std::vector<ObjectAnnotation> annotations;
  for (std::size_t n = 0; n < image_ids.size(); ++n) {
    Rng rng(mix_seed(cfg.seed, 3000 + n));
    const std::size_t boxes = 2 + rng.uniform_below(3);  // 2..4 objects per image
    for (std::size_t b = 0; b < boxes; ++b) {
      ObjectAnnotation annotation;
      annotation.image_id = image_ids[n];
      annotation.category = static_cast<int>(1 + rng.uniform_below(cfg.categories));
      const std::size_t h =
          std::max<std::size_t>(1, cfg.d1 / 6 + rng.uniform_below(std::max<std::size_t>(1, cfg.d1 / 6)));
      const std::size_t w =
          std::max<std::size_t>(1, cfg.d2 / 6 + rng.uniform_below(std::max<std::size_t>(1, cfg.d2 / 6)));
      annotation.bbox.h = std::min(h, cfg.d1);
      annotation.bbox.w = std::min(w, cfg.d2);
      annotation.bbox.row = rng.uniform_below(cfg.d1 - annotation.bbox.h + 1);
      annotation.bbox.col = rng.uniform_below(cfg.d2 - annotation.bbox.w + 1);
      annotations.push_back(std::move(annotation));
    }
  }
  return annotations;
}

DatasetManifest dataset_skeleton(const SynthConfig& cfg, const SynthPersons& persons,
                                 const std::vector<std::string>& image_ids) {
  DatasetManifest manifest;
  for (const std::string& id : image_ids)
    manifest.images.push_back(ImageRecord{id, cfg.d1, cfg.d2});
  for (const std::string& id : persons.training_ids)
    manifest.persons.push_back(PersonRecord{id, true});
  for (const std::string& id : persons.target_ids)
    manifest.persons.push_back(PersonRecord{id, false});
  manifest.annotation_files = {"annotations.jsonl"};
  return manifest;
}

}  // namespace

void write_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const SynthPersons persons = generate_persons(cfg);
  std::vector<std::string> image_ids;
  for (std::size_t n = 0; n < cfg.images; ++n) image_ids.push_back("img" + zero_pad(n, 3));

  const fs::path base(out_dir);
  fs::create_directories(base / "fixations");
  DatasetManifest manifest = dataset_skeleton(cfg, persons, image_ids);

  std::vector<std::string> all_ids = persons.training_ids;
  all_ids.insert(all_ids.end(), persons.target_ids.begin(), persons.target_ids.end());
  for (std::size_t p = 0; p < all_ids.size(); ++p) {
    fs::create_directories(base / "psms" / all_ids[p]);
    for (std::size_t n = 0; n < cfg.images; ++n) {
      const std::string relative = "psms/" + all_ids[p] + "/" + image_ids[n] + ".f32";
      write_map((base / relative).string(), synth_psm(cfg, persons, p, n));
      manifest.psm_paths[all_ids[p]][image_ids[n]] = relative;
    }
  }

  // Target persons get fixations for every image; strict-mode runs read only
  // the common subset.
  for (std::size_t t = 0; t < persons.target_ids.size(); ++t) {
    const std::size_t person_index = cfg.training_persons + t;
    std::vector<FixationSet> sets;
    for (std::size_t n = 0; n < cfg.images; ++n) {
      const SaliencyMap truth = synth_psm(cfg, persons, person_index, n);
      sets.push_back(sample_fixations(truth, cfg.fixations_per_image,
                                      mix_seed(cfg.seed, 9000 + person_index, n), image_ids[n],
                                      persons.target_ids[t]));
    }
    const std::string relative = "fixations/" + persons.target_ids[t] + ".csv";
    write_fixations_csv((base / relative).string(), sets);
    manifest.fixation_files.push_back(relative);
  }

  write_annotations_jsonl((base / "annotations.jsonl").string(),
                          synth_annotations(cfg, image_ids));
  save_manifest((base / "manifest.json").string(), manifest);
}

void write_planted_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const SynthPersons persons = generate_persons(cfg);
  std::vector<std::string> image_ids;
  for (std::size_t n = 0; n < cfg.images; ++n) image_ids.push_back("img" + zero_pad(n, 3));

  const fs::path base(out_dir);
  DatasetManifest manifest = dataset_skeleton(cfg, persons, image_ids);

  // Training maps are i.i.d. uniform rasters rather than smooth mixtures:
  // the planted weights are only identifiable from a handful of samples when
  // the inputs span the whole pixel space, and this dataset exists to verify
  // recovery. Maps are written as f32, so the stored values are re-read
  // before the contraction to keep the linear relation exact on disk.
  std::vector<std::vector<SaliencyMap>> training_maps(cfg.images);
  for (std::size_t p = 0; p < persons.training_ids.size(); ++p) {
    fs::create_directories(base / "psms" / persons.training_ids[p]);
    for (std::size_t n = 0; n < cfg.images; ++n) {
      Rng rng(mix_seed(cfg.seed, 6000 + p, n));
      std::vector<double> values(cfg.d1 * cfg.d2);
      for (double& v : values) v = static_cast<double>(static_cast<float>(rng.uniform01()));
      SaliencyMap map(cfg.d1, cfg.d2, std::move(values));
      const std::string relative = "psms/" + persons.training_ids[p] + "/" + image_ids[n] + ".f32";
      write_map((base / relative).string(), map);
      manifest.psm_paths[persons.training_ids[p]][image_ids[n]] = relative;
      training_maps[n].push_back(std::move(map));
    }
  }

  const std::size_t block = cfg.d1 * cfg.d2;
  for (std::size_t t = 0; t < persons.target_ids.size(); ++t) {
    Rng rng(mix_seed(cfg.seed, 4000 + t));
    std::vector<Matrix> factors;
    for (std::size_t extent : {cfg.training_persons, cfg.d1, cfg.d2, cfg.d1, cfg.d2}) {
      Matrix f(extent, cfg.planted_rank);
      for (std::size_t u = 0; u < extent; ++u)
        for (std::size_t r = 0; r < cfg.planted_rank; ++r) f(u, r) = rng.uniform(0.1, 1.0);
      factors.push_back(std::move(f));
    }
    CpFactors truth(cfg.planted_rank, std::move(factors));

    std::vector<std::vector<double>> raw(cfg.images);
    double peak = 0.0;
    for (std::size_t n = 0; n < cfg.images; ++n) {
      DenseTensor x = DenseTensor::zeros({cfg.training_persons, cfg.d1, cfg.d2});
      for (std::size_t p = 0; p < cfg.training_persons; ++p)
        for (std::size_t j = 0; j < block; ++j)
          x.values[p * block + j] = training_maps[n][p].values[j];
      raw[n] = contract_leading(x, truth, 3).values;
      for (double v : raw[n]) peak = std::max(peak, v);
    }
    if (peak == 0.0) peak = 1.0;

    // One global scale per target keeps the target maps an exact linear
    // image of the stacked training maps.
    fs::create_directories(base / "psms" / persons.target_ids[t]);
    for (std::size_t n = 0; n < cfg.images; ++n) {
      for (double& v : raw[n]) v /= peak;
      const std::string relative = "psms/" + persons.target_ids[t] + "/" + image_ids[n] + ".f32";
      write_map((base / relative).string(), SaliencyMap(cfg.d1, cfg.d2, std::move(raw[n])),
                "global_max");
      manifest.psm_paths[persons.target_ids[t]][image_ids[n]] = relative;
    }
  }

  write_annotations_jsonl((base / "annotations.jsonl").string(),
                          synth_annotations(cfg, image_ids));
  save_manifest((base / "manifest.json").string(), manifest);
}

}  // namespace psm
