#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fpage {

struct FaceEmbeddingRecord {
  std::string face_id;
  std::string image_id;
  std::string subject_id;
  std::array<double, 4> bbox{};
  std::vector<double> embedding;  // unit L2 norm
};

struct CleaningConfig {
  double eps = 0.35;  // cosine distance
  int min_pts = 3;
  int num_runs = 20;
  double ambiguity_ratio = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kNoise = -1;

struct ClusterAssignment {
  std::vector<int> labels;  // per input record: cluster id (0-based) or kNoise
  int num_clusters = 0;

  // Member indices per cluster, in assignment order.
  std::vector<std::vector<int>> clusters() const;
};

// Cosine distance 1 - <a, b>.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Throws InvalidArgument for duplicate face ids, mixed dimensions or embeddings whose
// norm differs from 1 by more than 1e-4.
void validate_embeddings(const std::vector<FaceEmbeddingRecord>& records);

// DBSCAN over cosine distance with cannot-link constraints between faces of the
// same image. Points are visited in `order` (a permutation of record indices);
// neighbourhoods are scanned in the same order. A point may join a cluster only
// if no member shares its image_id; a blocked point stays available to seed or
// join later clusters, or ends up as noise.
ClusterAssignment constrained_dbscan(const std::vector<FaceEmbeddingRecord>& records, std::span<const int> order,
                                     double eps, int min_pts);

enum class ReviewStatus { kUnreviewed, kKept, kDiscarded, kEdited };

struct ReviewState {
  ReviewStatus status = ReviewStatus::kUnreviewed;
  std::vector<std::string> edited_faces;  // only for kEdited, sorted

  bool operator==(const ReviewState&) const = default;
};

std::string to_string(ReviewStatus s);
ReviewStatus review_status_from_string(const std::string& s);

struct FaceInfo {
  std::string face_id;
  std::string image_id;
  std::array<double, 4> bbox{};
};

struct RunSummary {
  std::vector<int> sizes;  // density clusters, largest first
  int noise = 0;
};

struct ClusterConsensus {
  std::string subject_id;
  std::vector<std::string> kept_faces;  // sorted
  int largest_size = 0;
  int second_size = 0;
  bool ambiguous = false;
  int winning_run = 0;
  std::vector<RunSummary> runs_summary;
  // Clusters of the winning run (noise faces as singletons), largest first.
  std::vector<std::vector<std::string>> clusters;
  std::vector<FaceInfo> faces;  // every candidate face of the subject, sorted by face_id
  ReviewState review_state;

  double ratio() const { return largest_size > 0 ? static_cast<double>(second_size) / largest_size : 0.0; }
  nlohmann::json to_json() const;
  static ClusterConsensus from_json(const nlohmann::json& j);
};

// Deterministic permutation of [0, n) for one clustering run of one subject.
std::vector<int> run_order(int n, std::uint64_t seed, const std::string& subject_id, int run);

// Runs the constrained clustering num_runs times and keeps the largest cluster
// seen in any run. Noise faces count as singleton clusters. Ties go to the lower
// run index, then the lexicographically smaller sorted member list. The second
// size is the largest other cluster in the winning run; ambiguity is
// second_size > ambiguity_ratio * largest_size.
ClusterConsensus consensus_for_subject(const std::vector<FaceEmbeddingRecord>& records, const CleaningConfig& cfg);

// Directory of <subject_id>.jsonl files, each line
// {"face_id", "image_id", "bbox": [4], "embedding": [D]}. Faces are sorted by face_id.
std::map<std::string, std::vector<FaceEmbeddingRecord>> read_embedding_store(const std::filesystem::path& dir);
void write_embedding_store(const std::filesystem::path& dir,
                           const std::map<std::string, std::vector<FaceEmbeddingRecord>>& store);

struct CleaningSummary {
  std::vector<ClusterConsensus> consensus;  // sorted by subject_id
  std::vector<std::string> warnings;
  int ambiguous_count() const;
};

CleaningSummary clean_store(const std::map<std::string, std::vector<FaceEmbeddingRecord>>& store,
                            const CleaningConfig& cfg);

// Reads the store, clusters every subject and writes the consensus file and the
// review queue (ambiguous subjects only), both JSON Lines sorted by subject_id.
CleaningSummary run_cleaning(const std::filesystem::path& store_dir, const CleaningConfig& cfg,
                             const std::filesystem::path& consensus_path, const std::filesystem::path& queue_path);

std::vector<ClusterConsensus> read_consensus(const std::filesystem::path& path);

}  // namespace fpage
