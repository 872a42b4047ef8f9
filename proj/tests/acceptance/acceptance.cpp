// One line per acceptance criterion; exit status is nonzero if any fails.

#include "fpage/backbone.hpp"
#include "fpage/cleaning.hpp"
#include "fpage/evaluation.hpp"
#include "fpage/label_codec.hpp"
#include "fpage/model.hpp"
#include "fpage/probe.hpp"
#include "fpage/review.hpp"
#include "fpage/synthetic.hpp"
#include "fpage/training.hpp"

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "review_server.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace fpage;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a = 0, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

// ---- label codec ----

Outcome label_codec() {
  const LabelCodecConfig cfg;
  double worst_norm = 0.0;
  for (int y = 0; y < cfg.num_classes; ++y) worst_norm = std::max(worst_norm, std::abs(encode_label(y, cfg).sum() - 1.0));
  double worst_bias = 0.0;
  for (int y = 10; y <= 90; ++y) worst_bias = std::max(worst_bias, std::abs(decode_expectation(encode_label(y, cfg)) - y));
  const double boundary =
      std::abs(decode_expectation(encode_label(0, cfg)) - oracle::expectation(oracle::gaussian_label(0, 101, 2.0)));
  return {worst_norm < 1e-6 && worst_bias < 1e-3 && boundary < 1e-6,
          fmt("max |sum-1| %.2e, interior bias %.2e, y=0 vs direct sum %.2e", worst_norm, worst_bias, boundary)};
}

// ---- FPA + head against loop oracles ----

Outcome oracle_equivalence() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = fixtures::random_instance(rng);
    for (bool hard : {false, true}) {
      FpaOptions opt;
      opt.hard_masks = hard;
      const ForwardPass pass = model_forward(inst.features.low, inst.features.high, inst.features.masks, inst.params, opt);
      const auto v = oracle::fpa(oracle::to_field(inst.features.high), oracle::to_field(inst.features.masks),
                                 inst.params.fpa, hard);
      const oracle::Field got = oracle::to_field(pass.fpa.output);
      for (std::size_t n = 0; n < got.size(); ++n)
        for (std::size_t c = 0; c < got[n].size(); ++c)
          for (std::size_t i = 0; i < got[n][c].size(); ++i)
            for (std::size_t j = 0; j < got[n][c][i].size(); ++j)
              worst = std::max(worst, std::abs(got[n][c][i][j] - v.output[n][c][i][j]));
      const auto probs = oracle::head(oracle::to_field(inst.features.low), v.output, inst.params.head);
      for (int n = 0; n < inst.features.low.batch; ++n)
        for (int k = 0; k < inst.codec.num_classes; ++k)
          worst = std::max(worst, std::abs(pass.head.probs(k, n) - probs[n][k]));
    }
  }
  return {worst < 1e-5, fmt("50 instances x {soft, hard} masks, max abs diff %.2e", worst)};
}

// ---- gradients ----

double batch_loss(const fixtures::SmallInstance& inst, const LossConfig& lc) {
  const ForwardPass pass = model_forward(inst.features.low, inst.features.high, inst.features.masks, inst.params, {});
  double total = 0.0;
  for (int n = 0; n < inst.features.low.batch; ++n)
    total += loss(pass.head.distribution(n), encode_label(inst.ages[n], inst.codec), inst.ages[n], lc).total;
  return total;
}

Outcome gradient_checks() {
  std::mt19937_64 rng(102);
  const LossConfig lc{1.0};
  int passed = 0, checked = 0, probed = 0, kinks = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 14; ++trial) {
    auto inst = fixtures::random_instance(rng);
    const ForwardPass pass = model_forward(inst.features.low, inst.features.high, inst.features.masks, inst.params, {});
    Matrix grad_logits(inst.codec.num_classes, inst.features.low.batch);
    bool near_kink = false;
    for (int n = 0; n < inst.features.low.batch; ++n) {
      const auto pred = pass.head.distribution(n);
      near_kink |= std::abs(decode_expectation(pred) - inst.ages[n]) < 1e-3;
      grad_logits.col(n) = loss_logit_gradient(pred, encode_label(inst.ages[n], inst.codec), inst.ages[n], lc);
    }
    if (near_kink) continue;
    ModelParams grads = inst.params.zeros_like();
    model_backward(inst.features.high, pass, inst.params, {}, grad_logits, grads);
    auto views = inst.params.views();
    auto grad_views = grads.views();
    std::vector<double> analytic, numeric;
    for (std::size_t v = 0; v < views.size(); ++v) {
      std::vector<long> idx;
      std::uniform_int_distribution<long> pick(0, views[v].size() - 1);
      for (int s = 0; s < 4; ++s) {
        const long i = pick(rng);
        if (views[v].name == "fpa.group_w" && inst.params.fpa.block_diagonal &&
            inst.params.fpa.block_mask().data()[i] == 0.0)
          continue;
        idx.push_back(i);
      }
      const auto num = gradcheck::probe([&] { return batch_loss(inst, lc); }, views[v].data, idx);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        ++probed;
        if (!num[j].smooth) {
          ++kinks;
          continue;
        }
        analytic.push_back(grad_views[v].data[idx[j]]);
        numeric.push_back(num[j].central);
      }
    }
    const double err = gradcheck::relative_error(analytic, numeric);
    worst = std::max(worst, err);
    ++checked;
    passed += err < 1e-3;
  }
  const bool ok = checked >= 10 && passed == checked && kinks * 20 <= probed;
  std::ostringstream d;
  d << passed << "/" << checked << " instances, worst relative error " << fmt("%.2e", worst) << ", " << kinks << " of "
    << probed << " coordinates on a ReLU/L1 kink skipped";
  return {ok, d.str()};
}

// ---- loss identities ----

Outcome loss_identities() {
  const LabelCodecConfig codec;
  const LossConfig lc{1.0};
  double worst_self = 0.0;
  for (int y = 10; y <= 90; ++y) {
    const auto q = encode_label(y, codec);
    // The L1 term only sees the codec's truncation bias here.
    const LossValue v = loss(q, q, y, lc);
    worst_self = std::max(worst_self, std::abs(v.kl));
  }
  double worst_total = 0.0;
  for (int y = 10; y <= 90; ++y) {
    const auto q = encode_label(y, codec);
    worst_total = std::max(worst_total, std::abs(loss(q, q, y, lc).total));
  }
  AgeDistribution uniform{std::vector<double>(101, 1.0 / 101)};
  double worst_log_k = 0.0;
  for (int y : {0, 37, 100}) {
    AgeDistribution one_hot{std::vector<double>(101, 0.0)};
    one_hot.probs[y] = 1.0;
    worst_log_k = std::max(worst_log_k, std::abs(loss(uniform, one_hot, y, LossConfig{0.0}).kl - std::log(101.0)));
  }
  return {worst_self == 0.0 && worst_total < 1e-6 && worst_log_k < 1e-9,
          fmt("KL(q||q) max %.1e, total(q,q) max %.2e, |KL(onehot||uniform) - log K| %.1e", worst_self, worst_total,
              worst_log_k)};
}

// ---- toy convergence ----

struct ToyRun {
  TrainResult result;
  double seconds = 0.0;
};

std::shared_ptr<const ToyBackbone> toy_backbone() {
  ToyBackboneConfig bc;
  bc.seed = 1;
  bc.low_channels = 32;
  bc.high_channels = 64;
  static const auto bb = std::make_shared<const ToyBackbone>(bc);
  return bb;
}

const std::vector<TrainingExample>& toy_train_set() {
  static const auto set = make_age_dataset(*toy_backbone(), 2000, {}, 11);
  return set;
}

const std::vector<TrainingExample>& toy_val_set() {
  static const auto set = make_age_dataset(*toy_backbone(), 500, {}, 12);
  return set;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 30;
  cfg.seed = 3;
  cfg.model.trunk_channels = 32;
  cfg.model.norm_groups = 8;
  return cfg;
}

ToyRun run_toy() {
  const auto start = std::chrono::steady_clock::now();
  ToyRun run;
  run.result = train(toy_train_set(), toy_val_set(), toy_backbone(), toy_config(), LossConfig{}, [](const EpochLog& e) {
    std::fprintf(stderr, "  epoch %2d lr %.5f loss %.4f val_mae %.4f\n", e.epoch, e.lr, e.train_loss, e.val_mae);
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

bool same_params(ModelParams a, ModelParams b) {
  auto va = a.views();
  auto vb = b.views();
  if (va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].size() != vb[i].size()) return false;
    if (!std::equal(va[i].data, va[i].data + va[i].size(), vb[i].data)) return false;
  }
  return true;
}

std::optional<ModelCheckpoint> trained_toy;

Outcome toy_convergence() {
  const ToyRun first = run_toy();
  const ToyRun second = run_toy();
  trained_toy = first.result.checkpoint;
  bool identical = same_params(first.result.checkpoint.params, second.result.checkpoint.params) &&
                   first.result.history.size() == second.result.history.size();
  for (std::size_t i = 0; identical && i < first.result.history.size(); ++i) {
    identical = first.result.history[i].train_loss == second.result.history[i].train_loss &&
                first.result.history[i].val_mae == second.result.history[i].val_mae;
  }
  const double mae = first.result.checkpoint.meta.val_mae;
  std::ostringstream d;
  d << "val MAE " << fmt("%.4f", mae) << " at epoch " << first.result.checkpoint.meta.epoch << " of "
    << first.result.history.size() << ", rerun " << (identical ? "bit-identical" : "DIFFERS") << ", "
    << fmt("%.0f s + %.0f s", first.seconds, second.seconds);
  return {mae < 1.0 && identical && first.seconds + second.seconds < 600.0, d.str()};
}

// ---- schedule ----

Outcome schedule() {
  const TrainConfig cfg;
  const double at0 = lr_at(0, cfg);
  const double at5 = lr_at(5, cfg);
  const double jump = std::max(std::abs(lr_at(5 - 1e-9, cfg) - at5), std::abs(lr_at(5 + 1e-9, cfg) - at5));
  return {at0 == 0.0001 && at5 == 0.01 && jump < 1e-9,
          fmt("lr(0) = %.17g, lr(5) = %.17g, jump across warmup boundary %.1e", at0, at5, jump)};
}

// ---- metrics ----

Outcome metrics() {
  const EvalReport r = evaluate({PredictionRecord::make("a.png", 30, 30.0), PredictionRecord::make("b.png", 40, 43.0),
                                 PredictionRecord::make("c.png", 50, 44.0), PredictionRecord::make("d.png", 20, 30.0),
                                 PredictionRecord::make("e.png", 60, 58.0)});
  std::mt19937_64 rng(103);
  std::exponential_distribution<double> err(0.2);
  int monotone = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<PredictionRecord> preds;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) preds.push_back(PredictionRecord::make("x" + std::to_string(i), 50, 50.0 + err(rng)));
    std::vector<int> thresholds(31);
    for (int l = 0; l <= 30; ++l) thresholds[l] = l;
    const EvalReport rep = evaluate(preds, thresholds);
    bool ok = true;
    for (int l = 1; l <= 30; ++l) ok &= rep.cs.at(l) >= rep.cs.at(l - 1);
    monotone += ok;
  }
  return {r.mae == 4.2 && r.cs.at(5) == 60.0 && monotone == 1000,
          fmt("fixture MAE %.17g, CS_5 %.17g%%, CS monotone on %.0f/1000 random vectors", r.mae, r.cs.at(5), monotone)};
}

// ---- t-test ----

Outcome t_test() {
  // scipy.stats.ttest_rel reference values.
  const std::vector<double> d1 = {0.3, -0.1, 0.4, 0.2, 0.0, 0.5, -0.2, 0.1};
  const std::vector<double> d2 = {0.6, 0.2, 0.9, -0.3, 0.3, 0.5, 0.1, 0.8, 0.0, 0.4};
  const TTestResult r1 = paired_t_test(d1, std::vector<double>(d1.size(), 0.0), 8);
  const TTestResult r2 = paired_t_test(d2, std::vector<double>(d2.size(), 0.0), 8);
  const double fixture_err = std::max({std::abs(r1.t - 1.7320508075688776), std::abs(r1.p - 0.12687036692367074),
                                       std::abs(r2.t - 3.0000000000000004), std::abs(r2.p - 0.014956363910414187),
                                       std::abs(r2.p_corrected - 0.1196509112833135)});

  std::mt19937_64 rng(104);
  std::normal_distribution<double> noise(0.0, 1.0);
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 30);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = std::abs(noise(rng)) * 5;
      b[i] = std::abs(noise(rng)) * 5;
    }
    const int m = 1 + static_cast<int>(rng() % 10);
    const TTestResult ab = paired_t_test(a, b, m);
    const TTestResult ba = paired_t_test(b, a, m);
    good += std::abs(ab.t + ba.t) < 1e-12 && std::abs(ab.p - ba.p) < 1e-12 && ab.p_corrected >= ab.p &&
            ab.p_corrected <= 1.0 && std::abs(ab.p_corrected - std::min(1.0, ab.p * m)) < 1e-15;
  }

  const std::vector<double> a = {1.0, 2.0, 3.0};
  const TTestResult same = paired_t_test(a, a, 4);
  bool constant_shift_rejected = false;
  try {
    paired_t_test(a, std::vector<double>{2.0, 3.0, 4.0}, 1);
  } catch (const InvalidArgument&) {
    constant_shift_rejected = true;
  }
  const bool edges = same.t == 0.0 && same.p == 1.0 && same.p_corrected == 1.0 && constant_shift_rejected;
  std::ostringstream d;
  d << "fixture max diff " << fmt("%.1e", fixture_err) << ", antisymmetry/Bonferroni " << good
    << "/100, zero-variance edges " << (edges ? "ok" : "WRONG");
  return {fixture_err < 1e-6 && good == 100 && edges, d.str()};
}

// ---- cleaning ----

Outcome cleaning() {
  const PlantedStore planted = make_planted_store(PlantedStoreConfig{}, 105);
  const CleaningSummary s = clean_store(planted.store, CleaningConfig{});
  int kept_errors = 0, clear = 0;
  std::set<std::string> queue, expected_queue;
  for (std::size_t i = 0; i < s.consensus.size(); ++i) {
    const auto& truth = planted.truth[i];
    const auto& c = s.consensus[i];
    if (truth.expect_ambiguous) {
      expected_queue.insert(truth.subject_id);
    } else {
      ++clear;
      kept_errors += c.kept_faces != truth.main_faces;
    }
    if (c.ambiguous) queue.insert(c.subject_id);
  }

  int violations = 0, clusters_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PlantedStoreConfig pc;
    pc.num_subjects = 6;
    pc.num_ambiguous = 2;
    pc.lookalikes = 3;
    const PlantedStore p = make_planted_store(pc, 1000 + seed);
    CleaningConfig cfg;
    cfg.seed = seed;
    for (const auto& c : clean_store(p.store, cfg).consensus) {
      std::map<std::string, std::string> image_of;
      for (const auto& f : p.store.at(c.subject_id)) image_of[f.face_id] = f.image_id;
      for (const auto& cluster : c.clusters) {
        std::set<std::string> images;
        for (const auto& id : cluster) violations += !images.insert(image_of.at(id)).second;
        ++clusters_checked;
      }
    }
  }

  std::mt19937_64 rng(106);
  std::normal_distribution<double> normal(0.0, 1.0);
  int equivalent = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const int dim = 3 + trial % 5;
    const int n = 10 + trial * 2;
    std::vector<FaceEmbeddingRecord> recs;
    std::vector<std::vector<double>> pts;
    std::vector<std::vector<double>> centers(3, std::vector<double>(dim));
    for (auto& c : centers)
      for (double& x : c) x = normal(rng);
    for (int i = 0; i < n; ++i) {
      std::vector<double> e(dim);
      for (int k = 0; k < dim; ++k) e[k] = centers[i % 3][k] + 0.4 * normal(rng);
      double norm = 0.0;
      for (double x : e) norm += x * x;
      for (double& x : e) x /= std::sqrt(norm);
      FaceEmbeddingRecord r;
      r.face_id = "f" + std::to_string(i);
      r.image_id = "img" + std::to_string(i);
      r.subject_id = "s";
      r.embedding = e;
      recs.push_back(r);
      pts.push_back(e);
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const double eps = 0.05 + 0.02 * (trial % 6);
    const int min_pts = 2 + trial % 4;
    equivalent += constrained_dbscan(recs, order, eps, min_pts).labels == oracle::dbscan(pts, order, eps, min_pts);
  }

  std::ostringstream d;
  d << "kept-cluster errors " << kept_errors << "/" << clear << " clear subjects, queue "
    << (queue == expected_queue ? "==" : "!=") << " planted ambiguous set (" << queue.size() << "/"
    << expected_queue.size() << "), cannot-link violations " << violations << " in " << clusters_checked
    << " clusters over 100 seeds, unconstrained equivalence " << equivalent << "/" << trials;
  return {kept_errors == 0 && queue == expected_queue && violations == 0 && equivalent == trials, d.str()};
}

// ---- attention probe ----

Outcome attention_probe() {
  fixtures::TempDir dir("acceptance_probe");
  const auto manifest = write_age_dataset(dir / "val", toy_val_set());
  const auto records = read_manifest(manifest, LabelCodecConfig{});

  ModelCheckpoint zero;
  zero.model = toy_config().model;
  zero.codec = LabelCodecConfig{};
  zero.class_names = toy_backbone()->class_names();
  zero.backbone = toy_backbone()->description();
  zero.params = ModelParams::zeros(toy_backbone()->shape(), zero.codec, zero.model);
  const AttentionStats z = probe_attention(records, AgeEstimator(zero, toy_backbone()), default_age_edges());
  bool exact = true;
  for (std::size_t k = 0; k < z.mean.size(); ++k) exact &= z.mean[k] == 0.5 && z.std[k] == 0.0;

  if (!trained_toy) return {false, "no trained toy checkpoint"};
  const AttentionStats t = probe_attention(records, AgeEstimator(*trained_toy, toy_backbone()), default_age_edges());
  const auto index = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(t.class_names.begin(), t.class_names.end(), name) - t.class_names.begin());
  };
  const double left = t.mean.at(index("left_eye"));
  const double right = t.mean.at(index("right_eye"));
  const double nose = t.mean.at(index("nose"));
  std::ostringstream d;
  d << "zero weights " << (exact ? "0.5/0 exactly" : "NOT 0.5/0") << " on " << z.n << " images; trained: left_eye "
    << fmt("%.3f", left) << ", right_eye " << fmt("%.3f", right) << ", nose " << fmt("%.3f", nose);
  return {exact && left > nose && right > nose, d.str()};
}

// ---- review service ----

ReviewDecision decision(const std::string& subject, ReviewAction action, std::vector<std::string> kept = {}) {
  ReviewDecision d;
  d.subject_id = subject;
  d.action = action;
  d.kept_faces = std::move(kept);
  d.reviewer = "acceptance";
  return d;
}

Outcome review_service() {
  PlantedStoreConfig pc;
  pc.num_subjects = 15;
  pc.num_ambiguous = 10;
  pc.main_size = 8;
  CleaningConfig cc;
  cc.num_runs = 3;
  const auto consensus = clean_store(make_planted_store(pc, 107).store, cc).consensus;
  fixtures::TempDir dir("acceptance_review");
  const auto log = dir / "decisions.jsonl";

  std::string export_live, export_again;
  std::map<std::string, ReviewState> states;
  int drained = 0;
  int remaining = -1;
  {
    ReviewStore store(consensus, log);
    ReviewServer server(store, dir / "images");
    const int port = server.bind("127.0.0.1", 0);
    std::thread thread([&] { server.listen(); });
    for (int i = 0; i < 200 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    httplib::Client client("127.0.0.1", port);
    const auto queue = nlohmann::json::parse(client.Get("/queue?limit=100")->body).at("items");
    for (const auto& item : queue) {
      const std::string id = item.at("subject_id");
      const auto subject = nlohmann::json::parse(client.Get("/subject/" + id)->body);
      nlohmann::json body = {{"subject_id", id}, {"reviewer", "acceptance"}};
      if (drained < 5) {
        body["action"] = "keep";
      } else if (drained < 8) {
        body["action"] = "discard";
      } else {
        auto kept = subject.at("kept_faces").get<std::vector<std::string>>();
        kept.resize(kept.size() - 1);
        body["action"] = "edit";
        body["kept_faces"] = kept;
      }
      const auto res = client.Post("/decision", body.dump(), "application/json");
      drained += res && res->status == 200;
    }
    // A superseding decision exercises latest-wins on replay.
    const auto res = client.Post("/decision", nlohmann::json{{"subject_id", queue.at(5).at("subject_id")},
                                                           {"action", "keep"},
                                                           {"reviewer", "acceptance"}}
                                                  .dump(),
                                 "application/json");
    drained -= !(res && res->status == 200);
    remaining = nlohmann::json::parse(client.Get("/queue")->body).at("total");
    export_live = client.Get("/export")->body;
    export_again = client.Get("/export")->body;
    states = store.states();
    server.stop();
    thread.join();
  }
  ReviewStore replayed(consensus, log);
  const bool replay_ok = replayed.states() == states && replayed.export_manifest() == export_live;
  int lines = 0;
  std::istringstream in(export_live);
  for (std::string line; std::getline(in, line);) ++lines;
  std::ostringstream d;
  d << drained << "/10 decisions accepted over HTTP, " << remaining << " pending after drain, export "
    << (export_live == export_again ? "idempotent" : "NOT idempotent") << " (" << lines << " lines), replay "
    << (replay_ok ? "equivalent" : "DIFFERS");
  return {drained == 10 && remaining == 0 && export_live == export_again && replay_ok && lines == 5 + 6 + 2, d.str()};
}

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"label-codec", 1, label_codec},
      {"fpa-head-oracle", 30, oracle_equivalence},
      {"gradient-check", 120, gradient_checks},
      {"loss-identities", 1, loss_identities},
      {"toy-convergence", 600, toy_convergence},
      {"schedule", 1, schedule},
      {"metrics", 5, metrics},
      {"t-test", 5, t_test},
      {"cleaning", 120, cleaning},
      {"attention-probe", 60, attention_probe},
      {"review-service", 30, review_service},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      out.pass = false;
      out.detail += fmt(" [over budget %.0f s]", c.budget_seconds);
    }
    failed += !out.pass;
    std::printf("%s %-16s %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", c.name.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
