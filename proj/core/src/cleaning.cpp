#include "fpage/cleaning.hpp"

#include "fpage/errors.hpp"
#include "fpage/jsonl.hpp"
#include "fpage/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

namespace fpage {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

nlohmann::json bbox_json(const std::array<double, 4>& b) { return nlohmann::json::array({b[0], b[1], b[2], b[3]}); }

std::array<double, 4> bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("bbox must have 4 elements");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

void CleaningConfig::validate() const {
  if (!(eps > 0.0 && eps < 2.0)) throw InvalidArgument("cleaning: eps must be in (0, 2)");
  if (min_pts < 2) throw InvalidArgument("cleaning: min_pts must be >= 2");
  if (num_runs < 1) throw InvalidArgument("cleaning: num_runs must be >= 1");
  if (!(ambiguity_ratio > 0.0 && ambiguity_ratio <= 1.0)) throw InvalidArgument("cleaning: ambiguity_ratio must be in (0, 1]");
}

std::vector<std::vector<int>> ClusterAssignment::clusters() const {
  std::vector<std::vector<int>> out(num_clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kNoise) out[labels[i]].push_back(static_cast<int>(i));
  }
  return out;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

void validate_embeddings(const std::vector<FaceEmbeddingRecord>& records) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.face_id).second) throw InvalidArgument("duplicate face_id '" + r.face_id + "'");
    if (r.embedding.empty() || r.embedding.size() != records.front().embedding.size()) {
      throw InvalidArgument("face '" + r.face_id + "' has embedding dimension " + std::to_string(r.embedding.size()));
    }
    double sq = 0.0;
    for (double x : r.embedding) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
      throw InvalidArgument("face '" + r.face_id + "' embedding has norm " + std::to_string(std::sqrt(sq)));
    }
  }
}

ClusterAssignment constrained_dbscan(const std::vector<FaceEmbeddingRecord>& records, std::span<const int> order,
                                     double eps, int min_pts) {
  const int n = static_cast<int>(records.size());
  validate_embeddings(records);
  if (static_cast<int>(order.size()) != n) throw InvalidArgument("dbscan: order is not a permutation of the records");
  {
    std::vector<char> seen(n, 0);
    for (int i : order) {
      if (i < 0 || i >= n || seen[i]) throw InvalidArgument("dbscan: order is not a permutation of the records");
      seen[i] = 1;
    }
  }

  // Neighbourhoods (including the point itself), listed in processing order.
  std::vector<std::vector<int>> neighbours(n);
  for (int a : order) {
    for (int b : order) {
      if (cosine_distance(records[a].embedding, records[b].embedding) <= eps) neighbours[a].push_back(b);
    }
  }

  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  std::vector<char> visited(n, 0);
  std::vector<char> assigned(n, 0);
  for (int p : order) {
    if (assigned[p] || visited[p]) continue;
    visited[p] = 1;
    if (static_cast<int>(neighbours[p].size()) < min_pts) continue;

    const int cluster = out.num_clusters++;
    std::unordered_set<std::string> images;
    std::deque<int> queue(neighbours[p].begin(), neighbours[p].end());
    out.labels[p] = cluster;
    assigned[p] = 1;
    images.insert(records[p].image_id);
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (assigned[q]) continue;
      if (images.count(records[q].image_id)) continue;  // cannot-link
      out.labels[q] = cluster;
      assigned[q] = 1;
      images.insert(records[q].image_id);
      if (static_cast<int>(neighbours[q].size()) >= min_pts) {
        visited[q] = 1;
        queue.insert(queue.end(), neighbours[q].begin(), neighbours[q].end());
      }
    }
  }
  return out;
}

std::string to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kUnreviewed: return "unreviewed";
    case ReviewStatus::kKept: return "kept";
    case ReviewStatus::kDiscarded: return "discarded";
    case ReviewStatus::kEdited: return "edited";
  }
  return "unreviewed";
}

ReviewStatus review_status_from_string(const std::string& s) {
  if (s == "unreviewed") return ReviewStatus::kUnreviewed;
  if (s == "kept") return ReviewStatus::kKept;
  if (s == "discarded") return ReviewStatus::kDiscarded;
  if (s == "edited") return ReviewStatus::kEdited;
  throw InvalidArgument("unknown review state '" + s + "'");
}

nlohmann::json ClusterConsensus::to_json() const {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : runs_summary) runs.push_back({{"sizes", r.sizes}, {"noise", r.noise}});
  nlohmann::json face_rows = nlohmann::json::array();
  for (const auto& f : faces) face_rows.push_back({{"face_id", f.face_id}, {"image_id", f.image_id}, {"bbox", bbox_json(f.bbox)}});
  nlohmann::json j = {{"subject_id", subject_id},
                      {"kept_faces", kept_faces},
                      {"largest_size", largest_size},
                      {"second_size", second_size},
                      {"ambiguous", ambiguous},
                      {"winning_run", winning_run},
                      {"runs_summary", runs},
                      {"clusters", clusters},
                      {"faces", face_rows},
                      {"review_state", to_string(review_state.status)}};
  if (review_state.status == ReviewStatus::kEdited) j["edited_faces"] = review_state.edited_faces;
  return j;
}

ClusterConsensus ClusterConsensus::from_json(const nlohmann::json& j) {
  ClusterConsensus c;
  c.subject_id = j.at("subject_id").get<std::string>();
  c.kept_faces = j.at("kept_faces").get<std::vector<std::string>>();
  c.largest_size = j.at("largest_size").get<int>();
  c.second_size = j.at("second_size").get<int>();
  c.ambiguous = j.at("ambiguous").get<bool>();
  c.winning_run = j.value("winning_run", 0);
  for (const auto& r : j.value("runs_summary", nlohmann::json::array())) {
    c.runs_summary.push_back(RunSummary{r.at("sizes").get<std::vector<int>>(), r.value("noise", 0)});
  }
  c.clusters = j.value("clusters", std::vector<std::vector<std::string>>{});
  for (const auto& f : j.value("faces", nlohmann::json::array())) {
    c.faces.push_back(FaceInfo{f.at("face_id").get<std::string>(), f.at("image_id").get<std::string>(),
                               bbox_from_json(f.at("bbox"))});
  }
  c.review_state.status = review_status_from_string(j.value("review_state", std::string("unreviewed")));
  if (c.review_state.status == ReviewStatus::kEdited) {
    c.review_state.edited_faces = j.at("edited_faces").get<std::vector<std::string>>();
  }
  return c;
}

std::vector<int> run_order(int n, std::uint64_t seed, const std::string& subject_id, int run) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, fnv1a(subject_id), static_cast<std::uint64_t>(run)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

ClusterConsensus consensus_for_subject(const std::vector<FaceEmbeddingRecord>& records, const CleaningConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw InvalidArgument("consensus: subject has no faces");
  const int n = static_cast<int>(records.size());
  ClusterConsensus out;
  out.subject_id = records.front().subject_id;
  for (const auto& r : records) out.faces.push_back(FaceInfo{r.face_id, r.image_id, r.bbox});
  std::sort(out.faces.begin(), out.faces.end(), [](const FaceInfo& a, const FaceInfo& b) { return a.face_id < b.face_id; });

  std::vector<std::vector<std::string>> best_clusters;
  bool have_best = false;
  for (int run = 0; run < cfg.num_runs; ++run) {
    const auto order = run_order(n, cfg.seed, out.subject_id, run);
    const ClusterAssignment assignment = constrained_dbscan(records, order, cfg.eps, cfg.min_pts);

    std::vector<std::vector<std::string>> groups;
    RunSummary summary;
    for (const auto& members : assignment.clusters()) {
      std::vector<std::string> ids;
      for (int i : members) ids.push_back(records[i].face_id);
      std::sort(ids.begin(), ids.end());
      summary.sizes.push_back(static_cast<int>(ids.size()));
      groups.push_back(std::move(ids));
    }
    for (int i = 0; i < n; ++i) {
      if (assignment.labels[i] == kNoise) {
        groups.push_back({records[i].face_id});
        ++summary.noise;
      }
    }
    std::sort(summary.sizes.rbegin(), summary.sizes.rend());
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return a.size() > b.size();
      return a < b;
    });
    out.runs_summary.push_back(summary);

    // Strictly larger wins, so ties keep the earlier run.
    if (!have_best || groups.front().size() > best_clusters.front().size()) {
      best_clusters = std::move(groups);
      out.winning_run = run;
      have_best = true;
    }
  }

  out.kept_faces = best_clusters.front();
  out.largest_size = static_cast<int>(best_clusters.front().size());
  out.second_size = best_clusters.size() > 1 ? static_cast<int>(best_clusters[1].size()) : 0;
  out.ambiguous = out.second_size > cfg.ambiguity_ratio * out.largest_size;
  out.clusters = std::move(best_clusters);
  out.review_state.status = out.ambiguous ? ReviewStatus::kUnreviewed : ReviewStatus::kKept;
  return out;
}

std::map<std::string, std::vector<FaceEmbeddingRecord>> read_embedding_store(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("embedding store is not a readable directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<FaceEmbeddingRecord>> store;
  for (const auto& file : files) {
    const std::string subject = file.stem().string();
    auto& faces = store[subject];
    for_each_json_line(file, [&](const nlohmann::json& j, int line) {
      try {
        FaceEmbeddingRecord r;
        r.face_id = j.at("face_id").get<std::string>();
        r.image_id = j.at("image_id").get<std::string>();
        r.subject_id = j.value("subject_id", subject);
        if (r.subject_id != subject) throw InvalidArgument("subject_id '" + r.subject_id + "' does not match file name");
        r.bbox = bbox_from_json(j.at("bbox"));
        r.embedding = j.at("embedding").get<std::vector<double>>();
        faces.push_back(std::move(r));
      } catch (const nlohmann::json::exception& e) {
        throw IoError(file.string() + ":" + std::to_string(line) + ": " + e.what());
      } catch (const InvalidArgument& e) {
        throw IoError(file.string() + ":" + std::to_string(line) + ": " + e.what());
      }
    });
    std::sort(faces.begin(), faces.end(), [](const auto& a, const auto& b) { return a.face_id < b.face_id; });
  }
  return store;
}

void write_embedding_store(const std::filesystem::path& dir,
                           const std::map<std::string, std::vector<FaceEmbeddingRecord>>& store) {
  std::filesystem::create_directories(dir);
  for (const auto& [subject, faces] : store) {
    JsonLinesWriter w(dir / (subject + ".jsonl"));
    for (const auto& f : faces) {
      w.write({{"face_id", f.face_id}, {"image_id", f.image_id}, {"bbox", bbox_json(f.bbox)}, {"embedding", f.embedding}});
    }
    w.close();
  }
}

int CleaningSummary::ambiguous_count() const {
  return static_cast<int>(std::count_if(consensus.begin(), consensus.end(), [](const auto& c) { return c.ambiguous; }));
}

CleaningSummary clean_store(const std::map<std::string, std::vector<FaceEmbeddingRecord>>& store,
                            const CleaningConfig& cfg) {
  cfg.validate();
  CleaningSummary summary;
  for (const auto& [subject, faces] : store) {
    if (faces.empty()) {
      summary.warnings.push_back("subject '" + subject + "' has no faces; skipped");
      continue;
    }
    try {
      summary.consensus.push_back(consensus_for_subject(faces, cfg));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("subject '" + subject + "': " + e.what());
    }
  }
  return summary;
}

CleaningSummary run_cleaning(const std::filesystem::path& store_dir, const CleaningConfig& cfg,
                             const std::filesystem::path& consensus_path, const std::filesystem::path& queue_path) {
  CleaningSummary summary = clean_store(read_embedding_store(store_dir), cfg);
  JsonLinesWriter consensus(consensus_path);
  JsonLinesWriter queue(queue_path);
  for (const auto& c : summary.consensus) {
    const auto j = c.to_json();
    consensus.write(j);
    if (c.ambiguous) queue.write(j);
  }
  consensus.close();
  queue.close();
  return summary;
}

std::vector<ClusterConsensus> read_consensus(const std::filesystem::path& path) {
  std::vector<ClusterConsensus> out;
  for_each_json_line(path, [&](const nlohmann::json& j, int line) {
    try {
      out.push_back(ClusterConsensus::from_json(j));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace fpage
