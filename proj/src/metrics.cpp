#include "psm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "psm/common.hpp"

namespace psm {

double kl_divergence(const SaliencyMap& pred, const SaliencyMap& gt, double eps) {
  if (pred.d1 != gt.d1 || pred.d2 != gt.d2)
    throw ValidationError("kl_divergence: geometry mismatch");
  const double gt_sum = gt.sum();
  if (gt_sum == 0.0)
    throw ValidationError("kl_divergence: all-zero ground truth (exclude sample)");
  const double pred_sum = pred.sum();
  const double pred_scale = pred_sum > 0.0 ? 1.0 / pred_sum : 0.0;

  double kl = 0.0;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const double q = gt.values[i] / gt_sum;
    if (q == 0.0) continue;
    const double p = pred.values[i] * pred_scale;
    kl += q * std::log(eps + q / (p + eps));
  }
  return kl;
}

double cross_correlation(const SaliencyMap& pred, const SaliencyMap& gt) {
  if (pred.d1 != gt.d1 || pred.d2 != gt.d2)
    throw ValidationError("cross_correlation: geometry mismatch");
  const auto [pred_min, pred_max] = std::minmax_element(pred.values.begin(), pred.values.end());
  const auto [gt_min, gt_max] = std::minmax_element(gt.values.begin(), gt.values.end());
  if (*pred_min == *pred_max || *gt_min == *gt_max)
    throw ValidationError("cross_correlation: constant map (exclude sample)");
  const std::size_t n = pred.values.size();
  const double mean_p = pred.sum() / static_cast<double>(n);
  const double mean_g = gt.sum() / static_cast<double>(n);

  double cov = 0.0, var_p = 0.0, var_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred.values[i] - mean_p;
    const double b = gt.values[i] - mean_g;
    cov += a * b;
    var_p += a * a;
    var_g += b * b;
  }
  if (var_p == 0.0 || var_g == 0.0)
    throw ValidationError("cross_correlation: constant map (exclude sample)");
  return cov / std::sqrt(var_p * var_g);
}

EvalReport evaluate_suite(
    const std::map<std::string, std::map<PairKey, SaliencyMap>>& predictions_per_method,
    const std::map<PairKey, SaliencyMap>& ground_truth) {
  EvalReport report;
  for (const auto& [method, predictions] : predictions_per_method) {
    MethodAggregate agg;
    double kl_sum = 0.0, cc_sum = 0.0;
    for (const auto& [key, pred] : predictions) {
      const auto gt_it = ground_truth.find(key);
      if (gt_it == ground_truth.end())
        throw ValidationError("evaluate_suite: no ground truth for person '" + key.first +
                              "', image '" + key.second + "'");
      const SaliencyMap& gt = gt_it->second;
      try {
        const double kl = kl_divergence(pred, gt);
        const double cc = cross_correlation(pred, gt);
        report.rows.push_back(EvalRow{method, key.first, key.second, kl, cc});
        kl_sum += kl;
        cc_sum += cc;
        ++agg.pairs;
      } catch (const ValidationError& e) {
        ++agg.excluded;
        report.exclusions.push_back(method + "/" + key.first + "/" + key.second + ": " +
                                    e.what());
      }
    }
    if (agg.pairs > 0) {
      agg.mean_kldiv = kl_sum / static_cast<double>(agg.pairs);
      agg.mean_cc = cc_sum / static_cast<double>(agg.pairs);
    }
    report.methods[method] = agg;
  }
  return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_report_csv: cannot open " + path);
  out << "method,person,image,kldiv,cc\n";
  char buffer[64];
  for (const EvalRow& row : report.rows) {
    std::snprintf(buffer, sizeof(buffer), "%.9g,%.9g", row.kldiv, row.cc);
    out << row.method << "," << row.person << "," << row.image << "," << buffer << "\n";
  }
}

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::map<std::string, std::string>& notes) {
  nlohmann::json summary;
  summary["version"] = 1;
  for (const auto& [method, agg] : report.methods) {
    summary["methods"][method] = {
        {"mean_kldiv", agg.mean_kldiv},
        {"mean_cc", agg.mean_cc},
        {"pairs", agg.pairs},
        {"excluded", agg.excluded},
    };
  }
  summary["exclusions"] = report.exclusions;
  for (const auto& [key, value] : notes) summary["notes"][key] = value;
  std::ofstream out(path);
  if (!out) throw ValidationError("write_report_json: cannot open " + path);
  out << summary.dump(2) << "\n";
}

}  // namespace psm
