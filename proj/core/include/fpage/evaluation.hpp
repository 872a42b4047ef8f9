#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fpage {

struct PredictionRecord {
  std::string image_path;
  int true_age = 0;
  double pred_age = 0.0;
  double abs_err = 0.0;  // |pred_age - true_age|

  static PredictionRecord make(std::string image_path, int true_age, double pred_age);
  bool operator==(const PredictionRecord&) const = default;
};

struct EvalReport {
  int n = 0;
  double mae = 0.0;
  std::map<int, double> cs;  // threshold l (years) -> percentage with abs_err <= l
  std::vector<PredictionRecord> per_image;

  nlohmann::json to_json(bool include_per_image = false) const;
  // "threshold,cs" rows.
  std::string cs_csv() const;
};

std::vector<int> default_cs_thresholds();  // 1..10

// CS_5 is always reported, whether or not it is listed.
EvalReport evaluate(const std::vector<PredictionRecord>& preds, std::vector<int> thresholds = default_cs_thresholds());

struct TTestResult {
  int n = 0;
  double mean_diff = 0.0;
  double std_diff = 0.0;  // sample standard deviation (n - 1)
  double t = 0.0;
  double p = 1.0;         // two-sided
  double p_corrected = 1.0;
  double alpha = 0.05;
  int num_comparisons = 1;

  bool significant() const { return p_corrected < alpha; }
  nlohmann::json to_json() const;
};

// Paired t-test on d_i = errs_a[i] - errs_b[i] with Bonferroni correction.
// Zero variance: t = 0, p = 1 when every d_i is 0; InvalidArgument otherwise.
TTestResult paired_t_test(std::span<const double> errs_a, std::span<const double> errs_b, int num_comparisons,
                          double alpha = 0.05);

// JSON Lines, one PredictionRecord per line.
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

// Pairs two prediction files by image_path (order of `a`). Throws if the sets differ.
std::pair<std::vector<double>, std::vector<double>> aligned_errors(const std::vector<PredictionRecord>& a,
                                                                   const std::vector<PredictionRecord>& b);

}  // namespace fpage
