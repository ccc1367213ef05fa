#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace psm {

/// Non-negative d1 x d2 raster, row-major. d1 is the height (rows),
/// d2 the width (columns).
struct SaliencyMap {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  /// Validates finiteness and non-negativity.
  SaliencyMap(std::size_t d1_in, std::size_t d2_in, std::vector<double> values_in);

  static SaliencyMap zeros(std::size_t d1_in, std::size_t d2_in);

  double operator()(std::size_t r, std::size_t c) const { return values[r * d2 + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * d2 + c]; }

  std::size_t size() const { return values.size(); }
  double max_value() const;
  double sum() const;
};

/// Signed per-pixel residual between a personal map and the universal map.
struct DifferenceMap {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::vector<double> values;

  DifferenceMap() = default;
  DifferenceMap(std::size_t d1_in, std::size_t d2_in, std::vector<double> values_in);

  static DifferenceMap zeros(std::size_t d1_in, std::size_t d2_in);

  double operator()(std::size_t r, std::size_t c) const { return values[r * d2 + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * d2 + c]; }
};

struct Fixation {
  std::size_t x = 0;  // column
  std::size_t y = 0;  // row
};

struct FixationSet {
  std::string image_id;
  std::string person_id;
  std::vector<Fixation> points;
};

/// Ground-truth map construction: per-pixel fixation counts smoothed by an
/// isotropic Gaussian (std sigma, kernel truncated at 4*sigma, reflect
/// padding), then max-normalized to [0, 1].
SaliencyMap gt_map_from_fixations(const FixationSet& fixations, std::size_t d1, std::size_t d2,
                                  double sigma);

/// Pixel-wise arithmetic mean; the universal map over training persons.
SaliencyMap usm_mean(std::span<const SaliencyMap> maps);

/// psm - usm, pixel-wise.
DifferenceMap difference_map(const SaliencyMap& psm, const SaliencyMap& usm);

/// m + usm with negatives clamped to zero.
SaliencyMap compose_psm(const DifferenceMap& m, const SaliencyMap& usm);

enum class Resample {
  kDown,  // area average (box overlap); exact block mean for integer ratios
  kUp,    // bilinear, pixel-center aligned
};

SaliencyMap resample(const SaliencyMap& map, std::size_t new_d1, std::size_t new_d2,
                     Resample mode);

struct BBox {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t h = 0;
  std::size_t w = 0;
};

SaliencyMap crop(const SaliencyMap& map, const BBox& bbox);

/// Rescales so the maximum is 1; an all-zero map stays all-zero.
SaliencyMap normalize_unit_max(const SaliencyMap& map);

// --- file formats -----------------------------------------------------------
//
// Map raster: raw little-endian float32, row-major, at `path`; a JSON sidecar
// at `path + ".json"` holds {"version":1,"d1":...,"d2":...,"dtype":"f32",
// "normalization":"<tag>"}.
// Fixations: CSV with the exact header `image_id,person_id,x,y`.

void write_map(const std::string& path, const SaliencyMap& map,
               const std::string& normalization_tag = "unit_max");
SaliencyMap read_map(const std::string& path);

void write_fixations_csv(const std::string& path, std::span<const FixationSet> sets);
/// Rows are grouped into one FixationSet per (image_id, person_id) pair, in
/// order of first appearance.
std::vector<FixationSet> read_fixations_csv(const std::string& path);

}  // namespace psm
