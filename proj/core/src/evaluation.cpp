#include "fpage/evaluation.hpp"

#include "fpage/errors.hpp"
#include "fpage/jsonl.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace fpage {

PredictionRecord PredictionRecord::make(std::string image_path, int true_age, double pred_age) {
  return PredictionRecord{std::move(image_path), true_age, pred_age, std::abs(pred_age - true_age)};
}

std::vector<int> default_cs_thresholds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

EvalReport evaluate(const std::vector<PredictionRecord>& preds, std::vector<int> thresholds) {
  if (preds.empty()) throw InvalidArgument("evaluate: no predictions");
  if (std::find(thresholds.begin(), thresholds.end(), 5) == thresholds.end()) thresholds.push_back(5);
  EvalReport r;
  r.n = static_cast<int>(preds.size());
  r.per_image = preds;
  double sum = 0.0;
  for (const auto& p : preds) {
    if (!std::isfinite(p.abs_err) || p.abs_err < 0.0) throw InvalidArgument("evaluate: invalid abs_err for " + p.image_path);
    sum += p.abs_err;
  }
  r.mae = sum / r.n;
  for (int l : thresholds) {
    if (l < 0) throw InvalidArgument("evaluate: negative CS threshold");
    const auto hits = std::count_if(preds.begin(), preds.end(), [l](const PredictionRecord& p) { return p.abs_err <= l; });
    r.cs[l] = 100.0 * static_cast<double>(hits) / r.n;
  }
  return r;
}

nlohmann::json EvalReport::to_json(bool include_per_image) const {
  nlohmann::json cs_json = nlohmann::json::object();
  for (const auto& [l, v] : cs) cs_json[std::to_string(l)] = v;
  nlohmann::json j = {{"n", n}, {"mae", mae}, {"cs", cs_json}};
  if (include_per_image) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : per_image) {
      rows.push_back({{"image_path", p.image_path}, {"true_age", p.true_age}, {"pred_age", p.pred_age}, {"abs_err", p.abs_err}});
    }
    j["per_image"] = rows;
  }
  return j;
}

std::string EvalReport::cs_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,cs\n";
  for (const auto& [l, v] : cs) os << l << ',' << v << '\n';
  return os.str();
}

TTestResult paired_t_test(std::span<const double> errs_a, std::span<const double> errs_b, int num_comparisons,
                          double alpha) {
  if (errs_a.size() != errs_b.size()) {
    throw InvalidArgument("paired_t_test: lengths differ (" + std::to_string(errs_a.size()) + " vs " +
                          std::to_string(errs_b.size()) + ")");
  }
  if (errs_a.size() < 2) throw InvalidArgument("paired_t_test: need at least 2 pairs");
  if (num_comparisons < 1) throw InvalidArgument("paired_t_test: num_comparisons must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("paired_t_test: alpha must be in (0, 1)");

  TTestResult r;
  r.n = static_cast<int>(errs_a.size());
  r.alpha = alpha;
  r.num_comparisons = num_comparisons;
  std::vector<double> d(r.n);
  for (int i = 0; i < r.n; ++i) d[i] = errs_a[i] - errs_b[i];
  double sum = 0.0;
  for (double x : d) sum += x;
  r.mean_diff = sum / r.n;
  double ss = 0.0;
  for (double x : d) ss += (x - r.mean_diff) * (x - r.mean_diff);
  r.std_diff = std::sqrt(ss / (r.n - 1));

  if (r.std_diff == 0.0) {
    if (r.mean_diff != 0.0) {
      throw InvalidArgument("paired_t_test: degenerate variance (constant non-zero difference " +
                            std::to_string(r.mean_diff) + ")");
    }
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = std::sqrt(static_cast<double>(r.n)) * r.mean_diff / r.std_diff;
    const boost::math::students_t dist(r.n - 1);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.p = std::min(1.0, r.p);
  }
  r.p_corrected = std::min(1.0, r.p * num_comparisons);
  return r;
}

nlohmann::json TTestResult::to_json() const {
  return {{"n", n},         {"mean_diff", mean_diff},     {"std_diff", std_diff}, {"t", t},
          {"p", p},         {"p_corrected", p_corrected}, {"alpha", alpha},       {"num_comparisons", num_comparisons},
          {"significant", significant()}};
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
  JsonLinesWriter w(path);
  for (const auto& p : records) {
    w.write({{"image_path", p.image_path}, {"true_age", p.true_age}, {"pred_age", p.pred_age}, {"abs_err", p.abs_err}});
  }
  w.close();
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for_each_json_line(path, [&](const nlohmann::json& j, int line) {
    try {
      PredictionRecord p;
      p.image_path = j.at("image_path").get<std::string>();
      p.true_age = j.at("true_age").get<int>();
      p.pred_age = j.at("pred_age").get<double>();
      p.abs_err = j.at("abs_err").get<double>();
      if (std::abs(p.abs_err - std::abs(p.pred_age - p.true_age)) > 1e-9) {
        throw InvalidArgument("abs_err does not equal |pred_age - true_age|");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw IoError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::pair<std::vector<double>, std::vector<double>> aligned_errors(const std::vector<PredictionRecord>& a,
                                                                   const std::vector<PredictionRecord>& b) {
  if (a.size() != b.size()) throw InvalidArgument("prediction files cover different numbers of images");
  std::unordered_map<std::string, double> by_path;
  for (const auto& p : b) {
    if (!by_path.emplace(p.image_path, p.abs_err).second) throw InvalidArgument("duplicate image_path " + p.image_path);
  }
  std::vector<double> ea, eb;
  for (const auto& p : a) {
    const auto it = by_path.find(p.image_path);
    if (it == by_path.end()) throw InvalidArgument("image " + p.image_path + " missing from comparison predictions");
    ea.push_back(p.abs_err);
    eb.push_back(it->second);
  }
  return {ea, eb};
}

}  // namespace fpage
