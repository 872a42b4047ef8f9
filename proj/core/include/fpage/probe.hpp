#pragma once

#include "fpage/backbone.hpp"
#include "fpage/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fpage {

struct AttentionSummary {
  std::vector<double> mean;
  std::vector<double> std;  // population (n denominator)
  int n = 0;
};

struct AttentionStats {
  std::vector<std::string> class_names;
  std::vector<double> mean;
  std::vector<double> std;
  int n = 0;
  // Keyed by group label such as "10-19"; only non-empty groups appear.
  std::map<std::string, AttentionSummary> group_breakdown;
  std::vector<std::string> group_order;  // ascending age

  nlohmann::json to_json() const;
  // Header "class,mean,std" followed by one block per age group ("# group <label> n=<n>").
  std::string to_csv() const;
};

// Decade edges 0, 10, ..., 100.
std::vector<int> default_age_edges();

// Label of the group holding `age`: "[e_i, e_{i+1})" written "e_i-(e_{i+1}-1)", the
// last bin closed ("90-100"), "<e_0" below the first edge and ">e_last" above.
std::string age_group_label(int age, const std::vector<int>& edges);

// Aggregates per-sample attention vectors (one per column pair with ages).
AttentionStats summarize_attention(const std::vector<Vector>& attention, const std::vector<int>& ages,
                                   const std::vector<std::string>& class_names, const std::vector<int>& edges);

// Runs single-pass inference per record and aggregates the sigmoid attention.
AttentionStats probe_attention(const std::vector<DatasetRecord>& records, const AgeEstimator& estimator,
                               const std::vector<int>& edges);

}  // namespace fpage
