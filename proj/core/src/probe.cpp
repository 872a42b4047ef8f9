#include "fpage/probe.hpp"

#include "fpage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fpage {

namespace {

AttentionSummary summarize(const std::vector<const Vector*>& rows, int c) {
  AttentionSummary s;
  s.n = static_cast<int>(rows.size());
  s.mean.assign(c, 0.0);
  s.std.assign(c, 0.0);
  for (const Vector* v : rows) {
    for (int k = 0; k < c; ++k) s.mean[k] += (*v)[k];
  }
  for (int k = 0; k < c; ++k) s.mean[k] /= s.n;
  for (const Vector* v : rows) {
    for (int k = 0; k < c; ++k) {
      const double d = (*v)[k] - s.mean[k];
      s.std[k] += d * d;
    }
  }
  for (int k = 0; k < c; ++k) s.std[k] = std::sqrt(s.std[k] / s.n);
  return s;
}

std::string fmt_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::vector<int> default_age_edges() {
  std::vector<int> e;
  for (int a = 0; a <= 100; a += 10) e.push_back(a);
  return e;
}

std::string age_group_label(int age, const std::vector<int>& edges) {
  if (edges.size() < 2) throw InvalidArgument("age group edges need at least two values");
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw InvalidArgument("age group edges must be strictly increasing");
  }
  if (age < edges.front()) return "<" + std::to_string(edges.front());
  if (age > edges.back()) return ">" + std::to_string(edges.back());
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const bool last = i + 2 == edges.size();
    if (age < edges[i + 1] || (last && age <= edges[i + 1])) {
      const int hi = last ? edges[i + 1] : edges[i + 1] - 1;
      return std::to_string(edges[i]) + "-" + std::to_string(hi);
    }
  }
  return ">" + std::to_string(edges.back());
}

AttentionStats summarize_attention(const std::vector<Vector>& attention, const std::vector<int>& ages,
                                   const std::vector<std::string>& class_names, const std::vector<int>& edges) {
  if (attention.empty()) throw InvalidArgument("attention probe: no samples");
  if (attention.size() != ages.size()) throw InvalidArgument("attention probe: ages and samples differ in length");
  const int c = static_cast<int>(class_names.size());
  for (const auto& v : attention) {
    if (v.size() != c) {
      throw InvalidArgument("attention probe: vector of length " + std::to_string(v.size()) + " for " +
                            std::to_string(c) + " classes");
    }
  }

  AttentionStats stats;
  stats.class_names = class_names;
  std::vector<const Vector*> all;
  for (const auto& v : attention) all.push_back(&v);
  const AttentionSummary overall = summarize(all, c);
  stats.mean = overall.mean;
  stats.std = overall.std;
  stats.n = overall.n;

  // Group keys ordered by the smallest age they contain.
  std::map<std::string, std::vector<const Vector*>> members;
  std::map<std::string, int> first_age;
  for (std::size_t i = 0; i < attention.size(); ++i) {
    const std::string label = age_group_label(ages[i], edges);
    members[label].push_back(&attention[i]);
    auto it = first_age.find(label);
    if (it == first_age.end() || ages[i] < it->second) first_age[label] = ages[i];
  }
  for (const auto& [label, rows] : members) {
    stats.group_breakdown[label] = summarize(rows, c);
    stats.group_order.push_back(label);
  }
  std::sort(stats.group_order.begin(), stats.group_order.end(),
            [&](const std::string& a, const std::string& b) { return first_age[a] < first_age[b]; });
  return stats;
}

AttentionStats probe_attention(const std::vector<DatasetRecord>& records, const AgeEstimator& estimator,
                               const std::vector<int>& edges) {
  if (records.empty()) throw InvalidArgument("attention probe: empty manifest");
  estimator.checkpoint().validate_against(estimator.backbone());
  std::vector<Vector> attention;
  std::vector<int> ages;
  attention.reserve(records.size());
  for (const auto& r : records) {
    const Image image = load_image(r.image_path);
    attention.push_back(estimator.predict(image, r.bbox, false).attention);
    ages.push_back(r.age);
  }
  return summarize_attention(attention, ages, estimator.checkpoint().class_names, edges);
}

nlohmann::json AttentionStats::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& label : group_order) {
    const auto& g = group_breakdown.at(label);
    groups.push_back({{"group", label}, {"n", g.n}, {"mean", g.mean}, {"std", g.std}});
  }
  return {{"class_names", class_names}, {"mean", mean}, {"std", std}, {"n", n}, {"groups", groups}};
}

std::string AttentionStats::to_csv() const {
  std::ostringstream out;
  const auto block = [&](const std::vector<double>& m, const std::vector<double>& s) {
    out << "class,mean,std\n";
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      out << class_names[k] << ',' << fmt_num(m[k]) << ',' << fmt_num(s[k]) << '\n';
    }
  };
  out << "# all n=" << n << '\n';
  block(mean, std);
  for (const auto& label : group_order) {
    const auto& g = group_breakdown.at(label);
    out << "# group " << label << " n=" << g.n << '\n';
    block(g.mean, g.std);
  }
  return out.str();
}

}  // namespace fpage
