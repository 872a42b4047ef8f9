#include "fpage/review.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

namespace fpage {

std::string to_string(ReviewAction a) {
  switch (a) {
    case ReviewAction::kKeep: return "keep";
    case ReviewAction::kDiscard: return "discard";
    case ReviewAction::kEdit: return "edit";
  }
  return "keep";
}

ReviewAction review_action_from_string(const std::string& s) {
  if (s == "keep") return ReviewAction::kKeep;
  if (s == "discard") return ReviewAction::kDiscard;
  if (s == "edit") return ReviewAction::kEdit;
  throw ValidationError("action must be one of keep, discard, edit (got '" + s + "')");
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

bool is_utc_timestamp(const std::string& s) {
  static const std::regex re(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d{1,9})?Z)");
  return std::regex_match(s, re);
}

nlohmann::json ReviewDecision::to_json() const {
  nlohmann::json j = {{"subject_id", subject_id}, {"action", to_string(action)}, {"reviewer", reviewer},
                      {"timestamp", timestamp}};
  if (action == ReviewAction::kEdit) j["kept_faces"] = kept_faces;
  return j;
}

ReviewDecision ReviewDecision::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("decision must be a JSON object");
  static const std::set<std::string> known = {"subject_id", "action", "kept_faces", "reviewer", "timestamp"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown decision field '" + key + "'");
  }
  const auto str = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw ValidationError(std::string("missing field '") + key + "'");
      return {};
    }
    if (!j[key].is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
  };
  ReviewDecision d;
  d.subject_id = str("subject_id", true);
  if (d.subject_id.empty()) throw ValidationError("subject_id must be non-empty");
  d.action = review_action_from_string(str("action", true));
  d.reviewer = str("reviewer", false);
  d.timestamp = str("timestamp", false);
  if (!d.timestamp.empty() && !is_utc_timestamp(d.timestamp)) {
    throw ValidationError("timestamp must be UTC ISO-8601 ending in Z (got '" + d.timestamp + "')");
  }
  if (j.contains("kept_faces") && !j["kept_faces"].is_null()) {
    if (d.action != ReviewAction::kEdit) throw ValidationError("kept_faces is only allowed with action edit");
    if (!j["kept_faces"].is_array()) throw ValidationError("kept_faces must be an array of face ids");
    for (const auto& f : j["kept_faces"]) {
      if (!f.is_string()) throw ValidationError("kept_faces must be an array of face ids");
      d.kept_faces.push_back(f.get<std::string>());
    }
  } else if (d.action == ReviewAction::kEdit) {
    throw ValidationError("action edit requires kept_faces");
  }
  std::sort(d.kept_faces.begin(), d.kept_faces.end());
  if (std::adjacent_find(d.kept_faces.begin(), d.kept_faces.end()) != d.kept_faces.end()) {
    throw ValidationError("kept_faces contains duplicates");
  }
  if (d.action == ReviewAction::kEdit && d.kept_faces.empty()) throw ValidationError("kept_faces must be non-empty");
  return d;
}

ReviewStore::ReviewStore(std::vector<ClusterConsensus> consensus, const std::filesystem::path& decisions_log) {
  for (auto& c : consensus) {
    const std::string id = c.subject_id;
    if (subjects_.count(id)) throw InvalidArgument("consensus lists subject '" + id + "' twice");
    states_[id] = c.review_state;
    subjects_.emplace(id, std::move(c));
  }
  if (std::filesystem::exists(decisions_log)) {
    for_each_json_line(decisions_log, [&](const nlohmann::json& j, int line) {
      try {
        ReviewDecision d = ReviewDecision::from_json(j);
        if (d.timestamp.empty()) throw ValidationError("logged decision lacks a timestamp");
        validate(d);
        apply(d);
      } catch (const Error& e) {
        throw IoError(decisions_log.string() + ":" + std::to_string(line) + ": " + e.what());
      }
    });
  }
  log_ = std::make_unique<JsonLinesWriter>(decisions_log, JsonLinesWriter::Mode::kAppend);
}

void ReviewStore::validate(const ReviewDecision& d) const {
  const auto it = subjects_.find(d.subject_id);
  if (it == subjects_.end()) throw NotFound("unknown subject '" + d.subject_id + "'");
  if (d.action != ReviewAction::kEdit) return;
  std::map<std::string, const FaceInfo*> faces;
  for (const auto& f : it->second.faces) faces[f.face_id] = &f;
  std::map<std::string, std::string> images;
  for (const auto& id : d.kept_faces) {
    const auto f = faces.find(id);
    if (f == faces.end()) throw ValidationError("face '" + id + "' is not a candidate of subject '" + d.subject_id + "'");
    const auto [prev, inserted] = images.emplace(f->second->image_id, id);
    if (!inserted) {
      throw ValidationError("faces '" + prev->second + "' and '" + id + "' come from the same image '" +
                            f->second->image_id + "'");
    }
  }
}

void ReviewStore::apply(const ReviewDecision& d) {
  ReviewState& s = states_[d.subject_id];
  s.edited_faces.clear();
  switch (d.action) {
    case ReviewAction::kKeep: s.status = ReviewStatus::kKept; break;
    case ReviewAction::kDiscard: s.status = ReviewStatus::kDiscarded; break;
    case ReviewAction::kEdit:
      s.status = ReviewStatus::kEdited;
      s.edited_faces = d.kept_faces;
      break;
  }
  history_.push_back(d);
}

nlohmann::json ReviewStore::queue(const QueueQuery& query) const {
  if (query.limit < 1) throw ValidationError("limit must be >= 1");
  std::shared_lock lock(mutex_);
  nlohmann::json items = nlohmann::json::array();
  int total = 0;
  std::string last;
  bool more = false;
  for (const auto& [id, c] : subjects_) {
    if (!c.ambiguous) continue;
    const ReviewState& s = states_.at(id);
    if (!query.include_decided && s.status != ReviewStatus::kUnreviewed) continue;
    ++total;
    if (!query.cursor.empty() && id <= query.cursor) continue;
    if (static_cast<int>(items.size()) == query.limit) {
      more = true;
      continue;
    }
    items.push_back({{"subject_id", id},
                     {"largest_size", c.largest_size},
                     {"second_size", c.second_size},
                     {"ratio", c.ratio()},
                     {"review_state", to_string(s.status)}});
    last = id;
  }
  return {{"items", items}, {"next_cursor", more ? nlohmann::json(last) : nlohmann::json(nullptr)}, {"total", total}};
}

nlohmann::json ReviewStore::subject(const std::string& subject_id) const {
  std::shared_lock lock(mutex_);
  const auto it = subjects_.find(subject_id);
  if (it == subjects_.end()) throw NotFound("unknown subject '" + subject_id + "'");
  ClusterConsensus c = it->second;
  c.review_state = states_.at(subject_id);
  nlohmann::json j = c.to_json();
  for (auto& f : j["faces"]) f["thumbnail"] = "/thumbnails/" + f["image_id"].get<std::string>();
  return j;
}

nlohmann::json ReviewStore::submit(ReviewDecision decision) {
  if (decision.timestamp.empty()) decision.timestamp = utc_now_iso8601();
  std::unique_lock lock(mutex_);
  validate(decision);
  log_->write(decision.to_json());
  log_->sync();
  apply(decision);
  const ReviewState& s = states_.at(decision.subject_id);
  nlohmann::json j = {{"subject_id", decision.subject_id},
                      {"review_state", to_string(s.status)},
                      {"timestamp", decision.timestamp}};
  if (s.status == ReviewStatus::kEdited) j["edited_faces"] = s.edited_faces;
  return j;
}

std::string ReviewStore::export_manifest() const {
  std::shared_lock lock(mutex_);
  std::ostringstream out;
  for (const auto& [id, c] : subjects_) {
    const ReviewState& s = states_.at(id);
    std::vector<std::string> kept;
    std::string source;
    switch (s.status) {
      case ReviewStatus::kUnreviewed:
      case ReviewStatus::kDiscarded: continue;
      case ReviewStatus::kKept:
        kept = c.kept_faces;
        source = c.ambiguous || s != c.review_state ? "review_keep" : "consensus";
        break;
      case ReviewStatus::kEdited:
        kept = s.edited_faces;
        source = "review_edit";
        break;
    }
    const std::set<std::string> keep(kept.begin(), kept.end());
    nlohmann::json faces = nlohmann::json::array();
    for (const auto& f : c.faces) {
      if (!keep.count(f.face_id)) continue;
      faces.push_back(
          {{"face_id", f.face_id}, {"image_id", f.image_id}, {"bbox", {f.bbox[0], f.bbox[1], f.bbox[2], f.bbox[3]}}});
    }
    out << nlohmann::json{{"subject_id", id}, {"source", source}, {"faces", faces}}.dump() << '\n';
  }
  return out.str();
}

std::map<std::string, ReviewState> ReviewStore::states() const {
  std::shared_lock lock(mutex_);
  return states_;
}

std::vector<ReviewDecision> ReviewStore::history() const {
  std::shared_lock lock(mutex_);
  return history_;
}

int ReviewStore::pending_count() const {
  std::shared_lock lock(mutex_);
  int n = 0;
  for (const auto& [id, c] : subjects_) n += c.ambiguous && states_.at(id).status == ReviewStatus::kUnreviewed;
  return n;
}

}  // namespace fpage
