#include "fpage/review.hpp"
#include "fpage/synthetic.hpp"

#include "fixtures.hpp"
#include "review_server.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <thread>

namespace fpage {
namespace {

std::vector<ClusterConsensus> fixture_consensus(int ambiguous = 10, int clear = 5) {
  PlantedStoreConfig pc;
  pc.num_subjects = ambiguous + clear;
  pc.num_ambiguous = ambiguous;
  pc.main_size = 8;
  CleaningConfig cfg;
  cfg.num_runs = 3;
  return clean_store(make_planted_store(pc, 91).store, cfg).consensus;
}

const ClusterConsensus& first_ambiguous(const std::vector<ClusterConsensus>& all) {
  for (const auto& c : all)
    if (c.ambiguous) return c;
  throw std::runtime_error("no ambiguous subject");
}

ReviewDecision decision(const std::string& subject, ReviewAction action, std::vector<std::string> kept = {}) {
  ReviewDecision d;
  d.subject_id = subject;
  d.action = action;
  d.kept_faces = std::move(kept);
  d.reviewer = "tester";
  return d;
}

TEST(ReviewDecision, SchemaValidation) {
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "edit"}}), ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "edit"}, {"kept_faces", nlohmann::json::array()}}),
               ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "keep"}, {"kept_faces", {"a"}}}), ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "maybe"}}), ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"action", "keep"}}), ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "keep"}, {"timestamp", "yesterday"}}),
               ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "keep"}, {"extra", 1}}), ValidationError);
  EXPECT_THROW(ReviewDecision::from_json({{"subject_id", "s"}, {"action", "edit"}, {"kept_faces", {"a", "a"}}}),
               ValidationError);
  const auto d = ReviewDecision::from_json(
      {{"subject_id", "s"}, {"action", "edit"}, {"kept_faces", {"b", "a"}}, {"timestamp", "2024-01-02T03:04:05Z"}});
  EXPECT_EQ(d.kept_faces, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ReviewDecision::from_json(d.to_json()), d);
  EXPECT_TRUE(is_utc_timestamp(utc_now_iso8601()));
}

TEST(ReviewStore, QueueListsPendingAmbiguousSubjectsWithPaging) {
  const auto consensus = fixture_consensus();
  fixtures::TempDir dir("review_queue");
  ReviewStore store(consensus, dir / "decisions.jsonl");
  EXPECT_EQ(store.pending_count(), 10);

  std::vector<std::string> seen;
  QueueQuery q;
  q.limit = 4;
  for (int page = 0; page < 5; ++page) {
    const auto j = store.queue(q);
    EXPECT_EQ(j.at("total"), 10);
    for (const auto& item : j.at("items")) {
      seen.push_back(item.at("subject_id"));
      EXPECT_EQ(item.at("review_state"), "unreviewed");
      EXPECT_GT(item.at("ratio").get<double>(), 0.7);
    }
    if (j.at("next_cursor").is_null()) break;
    q.cursor = j.at("next_cursor");
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
}

TEST(ReviewStore, EditValidation) {
  const auto consensus = fixture_consensus(2, 0);
  fixtures::TempDir dir("review_edit");
  ReviewStore store(consensus, dir / "decisions.jsonl");
  const auto& c = first_ambiguous(consensus);
  EXPECT_THROW(store.submit(decision(c.subject_id, ReviewAction::kEdit, {"not_a_face"})), ValidationError);
  EXPECT_THROW(store.submit(decision("nobody", ReviewAction::kKeep)), NotFound);

  // Two faces from the same image break the cannot-link rule.
  std::map<std::string, std::vector<std::string>> by_image;
  for (const auto& f : c.faces) by_image[f.image_id].push_back(f.face_id);
  for (const auto& [image, ids] : by_image) {
    if (ids.size() < 2) continue;
    std::vector<std::string> pair = {ids[0], ids[1]};
    std::sort(pair.begin(), pair.end());
    EXPECT_THROW(store.submit(decision(c.subject_id, ReviewAction::kEdit, pair)), ValidationError);
    break;
  }
  EXPECT_TRUE(store.history().empty());
  EXPECT_TRUE(read_text_file(dir / "decisions.jsonl").empty());
}

TEST(ReviewStore, ExportWithoutDecisionsDropsAmbiguousSubjects) {
  const auto consensus = fixture_consensus(3, 4);
  fixtures::TempDir dir("review_export");
  ReviewStore store(consensus, dir / "decisions.jsonl");
  const std::string text = store.export_manifest();
  std::vector<std::string> subjects;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    subjects.push_back(j.at("subject_id"));
    EXPECT_EQ(j.at("source"), "consensus");
  }
  std::vector<std::string> expected;
  for (const auto& c : consensus)
    if (!c.ambiguous) expected.push_back(c.subject_id);
  EXPECT_EQ(subjects, expected);
  EXPECT_EQ(store.export_manifest(), text);
}

TEST(ReviewStore, DecisionsApplyAndReplayReproducesState) {
  const auto consensus = fixture_consensus(4, 2);
  fixtures::TempDir dir("review_replay");
  std::vector<std::string> amb;
  for (const auto& c : consensus)
    if (c.ambiguous) amb.push_back(c.subject_id);
  std::string exported;
  std::map<std::string, ReviewState> states;
  std::vector<ReviewDecision> history;
  {
    ReviewStore store(consensus, dir / "decisions.jsonl");
    store.submit(decision(amb[0], ReviewAction::kKeep));
    store.submit(decision(amb[1], ReviewAction::kDiscard));
    const auto& c2 = *std::find_if(consensus.begin(), consensus.end(), [&](const auto& c) { return c.subject_id == amb[2]; });
    std::vector<std::string> edited(c2.kept_faces.begin(), c2.kept_faces.end() - 2);
    const auto ack = store.submit(decision(amb[2], ReviewAction::kEdit, edited));
    EXPECT_EQ(ack.at("review_state"), "edited");
    // A later decision supersedes the earlier one but history keeps both.
    store.submit(decision(amb[1], ReviewAction::kKeep));
    EXPECT_EQ(store.pending_count(), 1);
    exported = store.export_manifest();
    states = store.states();
    history = store.history();
    EXPECT_EQ(history.size(), 4u);
    EXPECT_EQ(states.at(amb[1]).status, ReviewStatus::kKept);
    EXPECT_EQ(states.at(amb[2]).edited_faces, edited);

    std::istringstream in(exported);
    for (std::string line; std::getline(in, line);) {
      const auto j = nlohmann::json::parse(line);
      if (j.at("subject_id") == amb[2]) {
        EXPECT_EQ(j.at("source"), "review_edit");
        EXPECT_EQ(j.at("faces").size(), edited.size());
      }
      EXPECT_NE(j.at("subject_id"), amb[3]);
    }
  }
  ReviewStore replayed(consensus, dir / "decisions.jsonl");
  EXPECT_EQ(replayed.states(), states);
  EXPECT_EQ(replayed.history(), history);
  EXPECT_EQ(replayed.export_manifest(), exported);
}

TEST(ReviewStore, CorruptLogIsReportedWithLine) {
  const auto consensus = fixture_consensus(1, 0);
  fixtures::TempDir dir("review_corrupt");
  {
    std::ofstream out(dir / "decisions.jsonl");
    out << nlohmann::json{{"subject_id", consensus[0].subject_id}, {"action", "keep"}, {"reviewer", "r"},
                          {"timestamp", "2024-01-01T00:00:00Z"}}
               .dump()
        << "\n";
    out << R"({"subject_id":"ghost","action":"keep","reviewer":"r","timestamp":"2024-01-01T00:00:00Z"})" << "\n";
  }
  try {
    ReviewStore store(consensus, dir / "decisions.jsonl");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("decisions.jsonl:2"), std::string::npos);
  }
}

TEST(ReviewStore, SubjectPayloadHasThumbnails) {
  const auto consensus = fixture_consensus(1, 0);
  fixtures::TempDir dir("review_subject");
  ReviewStore store(consensus, dir / "decisions.jsonl");
  const auto j = store.subject(consensus[0].subject_id);
  EXPECT_EQ(j.at("clusters").size(), consensus[0].clusters.size());
  EXPECT_EQ(j.at("runs_summary").size(), consensus[0].runs_summary.size());
  for (const auto& f : j.at("faces")) {
    EXPECT_EQ(f.at("thumbnail"), "/thumbnails/" + f.at("image_id").get<std::string>());
  }
  EXPECT_THROW(store.subject("nobody"), NotFound);
}

class ReviewHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    consensus = fixture_consensus();
    dir = std::make_unique<fixtures::TempDir>("review_http");
    std::filesystem::create_directories(dir->path() / "images" / "subject_000");
    std::ofstream(dir->path() / "images" / "subject_000" / "img_000.png", std::ios::binary) << "PNGBYTES";
    start();
  }
  void TearDown() override { stop(); }

  void start() {
    store = std::make_unique<ReviewStore>(consensus, dir->path() / "decisions.jsonl");
    server = std::make_unique<ReviewServer>(*store, dir->path() / "images");
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->listen(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    for (int i = 0; i < 200 && !server->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  void stop() {
    if (server) server->stop();
    if (thread.joinable()) thread.join();
    client.reset();
    server.reset();
    store.reset();
  }
  httplib::Result post(const nlohmann::json& body) {
    return client->Post("/decision", body.dump(), "application/json");
  }

  std::vector<ClusterConsensus> consensus;
  std::unique_ptr<fixtures::TempDir> dir;
  std::unique_ptr<ReviewStore> store;
  std::unique_ptr<ReviewServer> server;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
  int port = 0;
};

TEST_F(ReviewHttp, DrainQueueThenExport) {
  auto res = client->Get("/queue?limit=100");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto items = nlohmann::json::parse(res->body).at("items");
  ASSERT_EQ(items.size(), 10u);
  int i = 0;
  for (const auto& item : items) {
    const std::string id = item.at("subject_id");
    const auto subject = nlohmann::json::parse(client->Get("/subject/" + id)->body);
    nlohmann::json body = {{"subject_id", id}, {"reviewer", "r"}};
    if (i < 5) {
      body["action"] = "keep";
    } else if (i < 8) {
      body["action"] = "discard";
    } else {
      auto kept = subject.at("kept_faces").get<std::vector<std::string>>();
      kept.resize(kept.size() - 2);
      body["action"] = "edit";
      body["kept_faces"] = kept;
    }
    res = post(body);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    const int remaining = nlohmann::json::parse(client->Get("/queue")->body).at("total");
    EXPECT_EQ(remaining, 9 - i);
    ++i;
  }
  EXPECT_TRUE(nlohmann::json::parse(client->Get("/queue")->body).at("items").empty());
  const auto all = nlohmann::json::parse(client->Get("/queue?state=all")->body);
  EXPECT_EQ(all.at("total"), 10);

  const std::string first = client->Get("/export")->body;
  const std::string second = client->Get("/export")->body;
  EXPECT_EQ(first, second);
  int lines = 0;
  std::istringstream in(first);
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 5 + 5 + 2);  // clear subjects + kept + edited
}

TEST_F(ReviewHttp, ErrorStatuses) {
  const auto& c = first_ambiguous(consensus);
  auto res = post({{"subject_id", c.subject_id}, {"action", "edit"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = post({{"subject_id", c.subject_id}, {"action", "edit"}, {"kept_faces", {"ghost"}}});
  EXPECT_EQ(res->status, 422);
  res = post({{"subject_id", "ghost"}, {"action", "keep"}});
  EXPECT_EQ(res->status, 404);
  res = client->Post("/decision", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(client->Get("/subject/ghost")->status, 404);
  EXPECT_EQ(client->Get("/queue?limit=zero")->status, 422);
  EXPECT_EQ(client->Get("/queue?state=weird")->status, 422);
}

TEST_F(ReviewHttp, ThumbnailsAreStaticFiles) {
  auto res = client->Get("/thumbnails/subject_000/img_000.png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "PNGBYTES");
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(client->Get("/thumbnails/subject_000/missing.png")->status, 404);
  EXPECT_EQ(client->Get("/thumbnails/../decisions.jsonl")->status, 404);
}

TEST_F(ReviewHttp, DecisionsSurviveRestart) {
  const auto& c = first_ambiguous(consensus);
  ASSERT_EQ(post({{"subject_id", c.subject_id}, {"action", "discard"}})->status, 200);
  const std::string before = client->Get("/export")->body;
  stop();
  start();
  const auto all = nlohmann::json::parse(client->Get("/queue?state=all&limit=100")->body).at("items");
  bool found = false;
  for (const auto& item : all) {
    if (item.at("subject_id") == c.subject_id) {
      EXPECT_EQ(item.at("review_state"), "discarded");
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(client->Get("/export")->body, before);
  EXPECT_EQ(nlohmann::json::parse(client->Get("/queue")->body).at("total"), 9);
}

TEST_F(ReviewHttp, ConcurrentReadersSeeConsistentExports) {
  std::vector<std::thread> readers;
  std::atomic<int> bad{0};
  for (int t = 0; t < 4; ++t) {
    readers.emplace_back([this, &bad] {
      httplib::Client cl("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        auto r = cl.Get("/export");
        if (!r || r->status != 200) ++bad;
      }
    });
  }
  std::vector<std::string> ids;
  for (const auto& c : consensus)
    if (c.ambiguous) ids.push_back(c.subject_id);
  for (const auto& id : ids) ASSERT_EQ(post({{"subject_id", id}, {"action", "keep"}})->status, 200);
  for (auto& r : readers) r.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_EQ(store->pending_count(), 0);
}

}  // namespace
}  // namespace fpage
