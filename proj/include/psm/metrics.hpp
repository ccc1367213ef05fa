#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "psm/saliency.hpp"

namespace psm {

/// Machine epsilon; see the note on kl_divergence.
inline constexpr double kKlEps = std::numeric_limits<double>::epsilon();

/// Kullback-Leibler divergence between the sum-normalized maps, ground truth
/// first: sum_x Q(x) * ln(eps + Q(x)/(P(x)+eps)) with Q built from `gt` and
/// P from `pred`. Pixels with Q(x) == 0 contribute exactly 0. The default
/// eps is machine epsilon so that kl(m, m) stays within 1e-12 of zero; pass
/// a larger eps explicitly if stronger smoothing is wanted. For the reverse
/// direction simply swap the arguments.
double kl_divergence(const SaliencyMap& pred, const SaliencyMap& gt, double eps = kKlEps);

/// Pearson correlation over pixels. Both maps must be non-constant.
double cross_correlation(const SaliencyMap& pred, const SaliencyMap& gt);

struct EvalRow {
  std::string method;
  std::string person;
  std::string image;
  double kldiv = 0.0;
  double cc = 0.0;
};

struct MethodAggregate {
  double mean_kldiv = 0.0;
  double mean_cc = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;                       // sorted by (method, person, image)
  std::map<std::string, MethodAggregate> methods;  // per-method means over rows
  std::vector<std::string> exclusions;             // human-readable skip log
};

using PairKey = std::pair<std::string, std::string>;  // (person, image)

/// Scores every (method, person, image) prediction against its ground truth.
/// Pairs whose gt is all-zero or where either map is constant are logged and
/// omitted from the means. Throws when a prediction has no matching gt.
EvalReport evaluate_suite(
    const std::map<std::string, std::map<PairKey, SaliencyMap>>& predictions_per_method,
    const std::map<PairKey, SaliencyMap>& ground_truth);

/// CSV rows `method,person,image,kldiv,cc` (with header).
void write_report_csv(const std::string& path, const EvalReport& report);
/// JSON aggregate summary per method.
void write_report_json(const std::string& path, const EvalReport& report,
                       const std::map<std::string, std::string>& notes = {});

}  // namespace psm
