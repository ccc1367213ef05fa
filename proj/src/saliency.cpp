#include "psm/saliency.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "psm/common.hpp"

namespace psm {

namespace {

void check_raster(std::size_t d1, std::size_t d2, const std::vector<double>& values,
                  bool non_negative, const char* what) {
  if (d1 == 0 || d2 == 0) throw ValidationError(std::string(what) + ": extents must be >= 1");
  if (values.size() != d1 * d2)
    throw ValidationError(std::string(what) + ": value count does not match d1*d2");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
    if (non_negative && v < 0.0)
      throw ValidationError(std::string(what) + ": negative value");
  }
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= sn) {
    if (i < 0) i = -i - 1;
    if (i >= sn) i = 2 * sn - i - 1;
  }
  return static_cast<std::size_t>(i);
}

// Separable Gaussian pass along rows or columns with reflect padding.
std::vector<double> gaussian_pass(const std::vector<double>& in, std::size_t d1, std::size_t d2,
                                  double sigma, bool along_rows) {
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double kernel_sum = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[k + radius] = w;
    kernel_sum += w;
  }
  for (double& w : kernel) w /= kernel_sum;

  std::vector<double> out(in.size(), 0.0);
  for (std::size_t r = 0; r < d1; ++r) {
    for (std::size_t c = 0; c < d2; ++c) {
      double sum = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        std::size_t rr = r;
        std::size_t cc = c;
        if (along_rows)
          cc = reflect_index(static_cast<std::ptrdiff_t>(c) + k, d2);
        else
          rr = reflect_index(static_cast<std::ptrdiff_t>(r) + k, d1);
        sum += kernel[k + radius] * in[rr * d2 + cc];
      }
      out[r * d2 + c] = sum;
    }
  }
  return out;
}

float to_le_f32(double v) {
  float f = static_cast<float>(v);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    bits = __builtin_bswap32(bits);
    std::memcpy(&f, &bits, 4);
  }
  return f;
}

float from_le_f32(float f) { return to_le_f32(static_cast<double>(f)); }

}  // namespace

SaliencyMap::SaliencyMap(std::size_t d1_in, std::size_t d2_in, std::vector<double> values_in)
    : d1(d1_in), d2(d2_in), values(std::move(values_in)) {
  check_raster(d1, d2, values, /*non_negative=*/true, "SaliencyMap");
}

SaliencyMap SaliencyMap::zeros(std::size_t d1_in, std::size_t d2_in) {
  return SaliencyMap(d1_in, d2_in, std::vector<double>(d1_in * d2_in, 0.0));
}

double SaliencyMap::max_value() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

double SaliencyMap::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

DifferenceMap::DifferenceMap(std::size_t d1_in, std::size_t d2_in, std::vector<double> values_in)
    : d1(d1_in), d2(d2_in), values(std::move(values_in)) {
  check_raster(d1, d2, values, /*non_negative=*/false, "DifferenceMap");
}

DifferenceMap DifferenceMap::zeros(std::size_t d1_in, std::size_t d2_in) {
  return DifferenceMap(d1_in, d2_in, std::vector<double>(d1_in * d2_in, 0.0));
}

SaliencyMap gt_map_from_fixations(const FixationSet& fixations, std::size_t d1, std::size_t d2,
                                  double sigma) {
  if (fixations.points.empty())
    throw ValidationError("gt_map_from_fixations: empty fixation set (exclude sample)");
  if (!(sigma > 0.0)) throw ValidationError("gt_map_from_fixations: sigma must be > 0");

  std::vector<double> raster(d1 * d2, 0.0);
  for (const Fixation& p : fixations.points) {
    if (p.y >= d1 || p.x >= d2)
      throw ValidationError("gt_map_from_fixations: fixation (" + std::to_string(p.x) + "," +
                            std::to_string(p.y) + ") outside " + std::to_string(d2) + "x" +
                            std::to_string(d1) + " image");
    raster[p.y * d2 + p.x] += 1.0;
  }

  std::vector<double> smoothed = gaussian_pass(raster, d1, d2, sigma, /*along_rows=*/true);
  smoothed = gaussian_pass(smoothed, d1, d2, sigma, /*along_rows=*/false);
  return normalize_unit_max(SaliencyMap(d1, d2, std::move(smoothed)));
}

SaliencyMap usm_mean(std::span<const SaliencyMap> maps) {
  if (maps.empty()) throw ValidationError("usm_mean: no maps");
  const std::size_t d1 = maps.front().d1;
  const std::size_t d2 = maps.front().d2;
  std::vector<double> mean(d1 * d2, 0.0);
  for (const SaliencyMap& m : maps) {
    if (m.d1 != d1 || m.d2 != d2) throw ValidationError("usm_mean: geometry mismatch");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += m.values[i];
  }
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (double& v : mean) v *= inv;
  return SaliencyMap(d1, d2, std::move(mean));
}

DifferenceMap difference_map(const SaliencyMap& psm, const SaliencyMap& usm) {
  if (psm.d1 != usm.d1 || psm.d2 != usm.d2)
    throw ValidationError("difference_map: geometry mismatch");
  std::vector<double> diff(psm.values.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = psm.values[i] - usm.values[i];
  return DifferenceMap(psm.d1, psm.d2, std::move(diff));
}

SaliencyMap compose_psm(const DifferenceMap& m, const SaliencyMap& usm) {
  if (m.d1 != usm.d1 || m.d2 != usm.d2)
    throw ValidationError("compose_psm: geometry mismatch");
  std::vector<double> sum(m.values.size());
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum[i] = std::max(0.0, m.values[i] + usm.values[i]);
  return SaliencyMap(m.d1, m.d2, std::move(sum));
}

namespace {

// Box-overlap weights mapping `n_in` source cells onto `n_out` target cells.
struct OverlapAxis {
  std::vector<std::size_t> begin;             // first source cell per target cell
  std::vector<std::vector<double>> weights;   // overlap lengths, sum = n_in/n_out
};

OverlapAxis make_overlap(std::size_t n_in, std::size_t n_out) {
  OverlapAxis axis;
  axis.begin.resize(n_out);
  axis.weights.resize(n_out);
  const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
  for (std::size_t t = 0; t < n_out; ++t) {
    const double lo = static_cast<double>(t) * scale;
    const double hi = static_cast<double>(t + 1) * scale;
    std::size_t first = static_cast<std::size_t>(lo);
    if (first >= n_in) first = n_in - 1;
    axis.begin[t] = first;
    for (std::size_t s = first; s < n_in && static_cast<double>(s) < hi - 1e-12; ++s) {
      const double overlap =
          std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      axis.weights[t].push_back(std::max(0.0, overlap));
    }
    if (axis.weights[t].empty()) axis.weights[t].push_back(1.0);
  }
  return axis;
}

SaliencyMap resample_area(const SaliencyMap& map, std::size_t new_d1, std::size_t new_d2) {
  const OverlapAxis rows = make_overlap(map.d1, new_d1);
  const OverlapAxis cols = make_overlap(map.d2, new_d2);
  SaliencyMap out = SaliencyMap::zeros(new_d1, new_d2);
  for (std::size_t r = 0; r < new_d1; ++r) {
    for (std::size_t c = 0; c < new_d2; ++c) {
      double acc = 0.0;
      double wsum = 0.0;
      for (std::size_t i = 0; i < rows.weights[r].size(); ++i) {
        for (std::size_t j = 0; j < cols.weights[c].size(); ++j) {
          const double w = rows.weights[r][i] * cols.weights[c][j];
          acc += w * map(rows.begin[r] + i, cols.begin[c] + j);
          wsum += w;
        }
      }
      out(r, c) = acc / wsum;
    }
  }
  return out;
}

SaliencyMap resample_bilinear(const SaliencyMap& map, std::size_t new_d1, std::size_t new_d2) {
  SaliencyMap out = SaliencyMap::zeros(new_d1, new_d2);
  const double sr = static_cast<double>(map.d1) / static_cast<double>(new_d1);
  const double sc = static_cast<double>(map.d2) / static_cast<double>(new_d2);
  for (std::size_t r = 0; r < new_d1; ++r) {
    double y = (static_cast<double>(r) + 0.5) * sr - 0.5;
    y = std::clamp(y, 0.0, static_cast<double>(map.d1 - 1));
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, map.d1 - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < new_d2; ++c) {
      double x = (static_cast<double>(c) + 0.5) * sc - 0.5;
      x = std::clamp(x, 0.0, static_cast<double>(map.d2 - 1));
      const std::size_t x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, map.d2 - 1);
      const double fx = x - static_cast<double>(x0);
      out(r, c) = (1.0 - fy) * ((1.0 - fx) * map(y0, x0) + fx * map(y0, x1)) +
                  fy * ((1.0 - fx) * map(y1, x0) + fx * map(y1, x1));
    }
  }
  return out;
}

}  // namespace

SaliencyMap resample(const SaliencyMap& map, std::size_t new_d1, std::size_t new_d2,
                     Resample mode) {
  if (new_d1 == 0 || new_d2 == 0) throw ValidationError("resample: target extents must be >= 1");
  if (new_d1 == map.d1 && new_d2 == map.d2) return map;
  return mode == Resample::kDown ? resample_area(map, new_d1, new_d2)
                                 : resample_bilinear(map, new_d1, new_d2);
}

SaliencyMap crop(const SaliencyMap& map, const BBox& bbox) {
  if (bbox.h == 0 || bbox.w == 0) throw ValidationError("crop: empty bbox");
  if (bbox.row + bbox.h > map.d1 || bbox.col + bbox.w > map.d2)
    throw ValidationError("crop: bbox (" + std::to_string(bbox.row) + "," +
                          std::to_string(bbox.col) + "," + std::to_string(bbox.h) + "," +
                          std::to_string(bbox.w) + ") outside " + std::to_string(map.d1) + "x" +
                          std::to_string(map.d2) + " map");
  SaliencyMap out = SaliencyMap::zeros(bbox.h, bbox.w);
  for (std::size_t r = 0; r < bbox.h; ++r)
    for (std::size_t c = 0; c < bbox.w; ++c) out(r, c) = map(bbox.row + r, bbox.col + c);
  return out;
}

SaliencyMap normalize_unit_max(const SaliencyMap& map) {
  const double m = map.max_value();
  if (m == 0.0) return map;
  std::vector<double> scaled(map.values.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = map.values[i] / m;
  return SaliencyMap(map.d1, map.d2, std::move(scaled));
}

void write_map(const std::string& path, const SaliencyMap& map,
               const std::string& normalization_tag) {
  nlohmann::json sidecar = {
      {"version", 1},
      {"d1", map.d1},
      {"d2", map.d2},
      {"dtype", "f32"},
      {"normalization", normalization_tag},
  };
  std::ofstream side(path + ".json");
  if (!side) throw ValidationError("write_map: cannot open " + path + ".json");
  side << sidecar.dump(2) << "\n";

  std::ofstream raw(path, std::ios::binary);
  if (!raw) throw ValidationError("write_map: cannot open " + path);
  std::vector<float> buffer(map.values.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = to_le_f32(map.values[i]);
  raw.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
}

SaliencyMap read_map(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw ValidationError("read_map: missing sidecar " + path + ".json");
  nlohmann::json sidecar;
  try {
    side >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("read_map: bad sidecar " + path + ".json: " + e.what());
  }
  if (sidecar.value("version", 0) != 1)
    throw ValidationError("read_map: unsupported sidecar version in " + path + ".json");
  if (sidecar.value("dtype", "") != "f32")
    throw ValidationError("read_map: unsupported dtype in " + path + ".json");
  const std::size_t d1 = sidecar.at("d1").get<std::size_t>();
  const std::size_t d2 = sidecar.at("d2").get<std::size_t>();

  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) throw ValidationError("read_map: missing raster " + path);
  const std::uintmax_t expected = static_cast<std::uintmax_t>(d1) * d2 * sizeof(float);
  if (actual != expected)
    throw ValidationError("read_map: " + path + " has " + std::to_string(actual) +
                          " bytes, expected " + std::to_string(expected));

  std::ifstream raw(path, std::ios::binary);
  if (!raw) throw ValidationError("read_map: cannot open " + path);
  std::vector<float> buffer(d1 * d2);
  raw.read(reinterpret_cast<char*>(buffer.data()),
           static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  if (!raw) throw ValidationError("read_map: short read on " + path);

  std::vector<double> values(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    values[i] = static_cast<double>(from_le_f32(buffer[i]));
  try {
    return SaliencyMap(d1, d2, std::move(values));
  } catch (const ValidationError& e) {
    throw ValidationError("read_map: " + path + ": " + e.what());
  }
}

void write_fixations_csv(const std::string& path, std::span<const FixationSet> sets) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_fixations_csv: cannot open " + path);
  out << "image_id,person_id,x,y\n";
  for (const FixationSet& set : sets)
    for (const Fixation& p : set.points)
      out << set.image_id << "," << set.person_id << "," << p.x << "," << p.y << "\n";
}

std::vector<FixationSet> read_fixations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("read_fixations_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("read_fixations_csv: empty file " + path);
  if (line == "image_id,person_id,x,y\r") line.pop_back();
  if (line != "image_id,person_id,x,y")
    throw ValidationError("read_fixations_csv: bad header in " + path + ": '" + line + "'");

  std::vector<FixationSet> sets;
  std::unordered_map<std::string, std::size_t> index;  // "image\x1fperson" -> sets slot
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string image_id, person_id, x_text, y_text;
    if (!std::getline(row, image_id, ',') || !std::getline(row, person_id, ',') ||
        !std::getline(row, x_text, ',') || !std::getline(row, y_text))
      throw ValidationError("read_fixations_csv: malformed row " + std::to_string(line_no) +
                            " in " + path);
    Fixation p;
    try {
      p.x = static_cast<std::size_t>(std::stoull(x_text));
      p.y = static_cast<std::size_t>(std::stoull(y_text));
    } catch (const std::exception&) {
      throw ValidationError("read_fixations_csv: bad coordinates at row " +
                            std::to_string(line_no) + " in " + path);
    }
    const std::string key = image_id + '\x1f' + person_id;
    auto [it, inserted] = index.try_emplace(key, sets.size());
    if (inserted) sets.push_back(FixationSet{image_id, person_id, {}});
    sets[it->second].points.push_back(p);
  }
  return sets;
}

}  // namespace psm
