#pragma once

#include "fpage/cleaning.hpp"
#include "fpage/errors.hpp"
#include "fpage/jsonl.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace fpage {

// Decision payload failed schema or consistency checks (maps to HTTP 422).
class ValidationError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class ReviewAction { kKeep, kDiscard, kEdit };

std::string to_string(ReviewAction a);
ReviewAction review_action_from_string(const std::string& s);

struct ReviewDecision {
  std::string subject_id;
  ReviewAction action = ReviewAction::kKeep;
  std::vector<std::string> kept_faces;  // sorted; only for kEdit
  std::string reviewer;
  std::string timestamp;  // UTC, "YYYY-MM-DDTHH:MM:SS[.fff]Z"

  bool operator==(const ReviewDecision&) const = default;
  nlohmann::json to_json() const;
  // Schema check only. A missing timestamp is left empty for the caller to fill.
  static ReviewDecision from_json(const nlohmann::json& j);
};

std::string utc_now_iso8601();
bool is_utc_timestamp(const std::string& s);

struct QueueQuery {
  std::string cursor;  // exclusive lower bound on subject_id; empty = start
  int limit = 50;
  bool include_decided = false;
};

// Consensus plus the replayed decision log. Reads take a shared lock; decisions
// are serialized and acknowledged only after the log line is fsynced.
class ReviewStore {
 public:
  ReviewStore(std::vector<ClusterConsensus> consensus, const std::filesystem::path& decisions_log);

  // {"items": [{subject_id, largest_size, second_size, ratio, review_state}], "next_cursor", "total"}
  // Lists ambiguous subjects; pending only unless include_decided.
  nlohmann::json queue(const QueueQuery& query) const;
  // Consensus record plus per-face thumbnail paths "/thumbnails/<image_id>".
  nlohmann::json subject(const std::string& subject_id) const;
  // Validates, appends durably, applies. Returns the new review state as JSON.
  nlohmann::json submit(ReviewDecision decision);
  // JSON Lines, one subject per line sorted by subject_id:
  // {"subject_id", "source", "faces": [{face_id, image_id, bbox}]}.
  std::string export_manifest() const;

  std::map<std::string, ReviewState> states() const;
  std::vector<ReviewDecision> history() const;
  int pending_count() const;

 private:
  void validate(const ReviewDecision& d) const;
  void apply(const ReviewDecision& d);

  std::map<std::string, ClusterConsensus> subjects_;
  std::map<std::string, ReviewState> states_;
  std::vector<ReviewDecision> history_;
  std::unique_ptr<JsonLinesWriter> log_;
  mutable std::shared_mutex mutex_;
};

}  // namespace fpage
