#include "cli.hpp"

#include "review_server.hpp"

#include "fpage/backbone.hpp"
#include "fpage/cleaning.hpp"
#include "fpage/evaluation.hpp"
#include "fpage/jsonl.hpp"
#include "fpage/model.hpp"
#include "fpage/probe.hpp"
#include "fpage/review.hpp"
#include "fpage/synthetic.hpp"
#include "fpage/training.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace fpage {

namespace {

ReviewServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw CLI::ValidationError("expected comma-separated integers, got '" + text + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

AgeEstimator load_estimator(const std::string& checkpoint_path) {
  ModelCheckpoint ckpt = load_checkpoint(checkpoint_path);
  auto backbone = make_backbone(ckpt.backbone);
  ckpt.validate_against(*backbone);
  return AgeEstimator(std::move(ckpt), std::move(backbone));
}

std::vector<PredictionRecord> predict_manifest(const AgeEstimator& estimator, const std::string& manifest, bool tta) {
  const auto records = read_manifest(manifest, estimator.checkpoint().codec);
  if (records.empty()) throw InvalidArgument("manifest " + manifest + " is empty");
  std::vector<PredictionRecord> preds;
  for (const auto& r : records) {
    const Image image = load_image(r.image_path);
    const Prediction p = estimator.predict(image, r.bbox, tta);
    preds.push_back(PredictionRecord::make(r.image_path, r.age, p.age));
  }
  return preds;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face-parsing-attention age estimation, dataset cleaning and evaluation"};
  app.name("fpage");
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the attention head and age network on a frozen backbone");
  std::string config_path, train_manifest, val_manifest, backbone_path, out_path, log_path;
  std::optional<std::uint64_t> seed;
  double lambda = 1.0;
  train_cmd->add_option("--config", config_path, "key = value training config");
  train_cmd->add_option("--train", train_manifest, "Training manifest (JSON Lines)")->required();
  train_cmd->add_option("--val", val_manifest, "Validation manifest (JSON Lines)")->required();
  train_cmd->add_option("--backbone", backbone_path, "Backbone description JSON (default: toy backbone)");
  train_cmd->add_option("--seed", seed, "Overrides the config seed");
  train_cmd->add_option("--lambda", lambda, "Weight of the L1 expectation term")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_cmd->add_option("--log", log_path, "Per-epoch JSON Lines log");

  // predict / eval
  auto* predict_cmd = app.add_subcommand("predict", "Predict ages for every record of a manifest");
  std::string checkpoint_path, manifest_path;
  bool tta = false;
  predict_cmd->add_option("--checkpoint", checkpoint_path)->required();
  predict_cmd->add_option("--manifest", manifest_path)->required();
  predict_cmd->add_flag("--tta", tta, "Average with the mirrored image");
  predict_cmd->add_option("--out", out_path, "Predictions (JSON Lines); stdout when omitted");

  auto* eval_cmd = app.add_subcommand("eval", "Predict and report MAE and CS on a manifest");
  std::string pred_out;
  eval_cmd->add_option("--checkpoint", checkpoint_path)->required();
  eval_cmd->add_option("--manifest", manifest_path)->required();
  eval_cmd->add_flag("--tta", tta, "Average with the mirrored image");
  eval_cmd->add_option("--pred-out", pred_out, "Also write per-image predictions");
  eval_cmd->add_option("--out", out_path, "Report JSON");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "MAE/CS of a prediction file, or a paired t-test between two");
  std::string pred_path, compare_path, thresholds_text;
  int num_comparisons = 1;
  double alpha = 0.05;
  metrics_cmd->add_option("--pred", pred_path, "Predictions (JSON Lines)")->required();
  metrics_cmd->add_option("--compare", compare_path, "Second prediction file for a paired t-test");
  metrics_cmd->add_option("--num-comparisons", num_comparisons, "Bonferroni family size")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--alpha", alpha)->check(CLI::Range(0.0, 1.0));
  metrics_cmd->add_option("--thresholds", thresholds_text, "CS thresholds, e.g. 1,2,5 (default 1..10)");
  metrics_cmd->add_option("--out", out_path, "Also write the JSON result here");

  // clean
  auto* clean_cmd = app.add_subcommand("clean", "Identity cleaning of face embeddings");
  clean_cmd->require_subcommand(1);
  auto* clean_run = clean_cmd->add_subcommand("run", "Cluster every subject and write consensus + review queue");
  std::string embeddings_dir;
  CleaningConfig clean_cfg;
  clean_run->add_option("--embeddings", embeddings_dir, "Directory of <subject>.jsonl files")->required();
  clean_run->add_option("--runs", clean_cfg.num_runs)->check(CLI::PositiveNumber);
  clean_run->add_option("--eps", clean_cfg.eps, "Cosine distance radius");
  clean_run->add_option("--min-pts", clean_cfg.min_pts);
  clean_run->add_option("--ratio", clean_cfg.ambiguity_ratio, "Ambiguity ratio");
  clean_run->add_option("--seed", seed);
  clean_run->add_option("--out", out_path, "Output directory")->required();

  auto* review_cmd = clean_cmd->add_subcommand("review-serve", "Serve the review queue over HTTP");
  std::string consensus_path, decisions_path, host = "127.0.0.1", image_root;
  int port = 8080;
  review_cmd->add_option("--consensus", consensus_path)->required();
  review_cmd->add_option("--decisions", decisions_path, "Append-only decision log")->required();
  review_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  review_cmd->add_option("--host", host);
  review_cmd->add_option("--image-root", image_root, "Overrides FPAGE_IMAGE_ROOT");

  // probe-attention
  auto* probe_cmd = app.add_subcommand("probe-attention", "Per-region attention statistics over a manifest");
  std::string edges_text;
  probe_cmd->add_option("--checkpoint", checkpoint_path)->required();
  probe_cmd->add_option("--manifest", manifest_path)->required();
  probe_cmd->add_option("--edges", edges_text, "Age group edges (default 0,10,...,100)");
  probe_cmd->add_option("--out", out_path, "Writes <out>.csv and <out>.json");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic data sets");
  synth_cmd->require_subcommand(1);
  auto* synth_faces = synth_cmd->add_subcommand("faces", "Age-coded faces for the toy backbone");
  int count = 100;
  synth_faces->add_option("--count", count)->check(CLI::PositiveNumber);
  synth_faces->add_option("--backbone", backbone_path, "Backbone description JSON (default: toy backbone)");
  synth_faces->add_option("--seed", seed);
  synth_faces->add_option("--out", out_path, "Output directory")->required();
  auto* synth_embeddings = synth_cmd->add_subcommand("embeddings", "Embedding store with planted contamination");
  PlantedStoreConfig planted;
  synth_embeddings->add_option("--subjects", planted.num_subjects)->check(CLI::PositiveNumber);
  synth_embeddings->add_option("--ambiguous", planted.num_ambiguous)->check(CLI::NonNegativeNumber);
  synth_embeddings->add_option("--seed", seed);
  synth_embeddings->add_option("--out", out_path, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
      if (seed) cfg.seed = *seed;
      cfg.validate();
      LossConfig loss_cfg{lambda};
      const nlohmann::json desc =
          backbone_path.empty() ? nlohmann::json{{"type", "toy"}, {"config", nlohmann::json::object()}}
                                : read_json_file(backbone_path);
      auto backbone = make_backbone(desc);
      const auto train_set = load_examples(read_manifest(train_manifest, cfg.codec));
      const auto val_set = load_examples(read_manifest(val_manifest, cfg.codec));
      std::optional<JsonLinesWriter> log;
      if (!log_path.empty()) log.emplace(log_path);
      const TrainResult result = train(train_set, val_set, backbone, cfg, loss_cfg, [&](const EpochLog& e) {
        out << e.to_json().dump() << '\n' << std::flush;
        if (log) log->write(e.to_json());
      });
      save_checkpoint(result.checkpoint, out_path);
      out << nlohmann::json{{"checkpoint", out_path},
                            {"best_epoch", result.checkpoint.meta.epoch},
                            {"val_mae", result.checkpoint.meta.val_mae}}
                 .dump()
          << '\n';
    } else if (*predict_cmd) {
      const AgeEstimator estimator = load_estimator(checkpoint_path);
      const auto preds = predict_manifest(estimator, manifest_path, tta);
      if (out_path.empty()) {
        for (const auto& p : preds) {
          out << nlohmann::json{{"image_path", p.image_path}, {"true_age", p.true_age}, {"pred_age", p.pred_age},
                                {"abs_err", p.abs_err}}
                     .dump()
              << '\n';
        }
      } else {
        write_predictions(out_path, preds);
      }
    } else if (*eval_cmd) {
      const AgeEstimator estimator = load_estimator(checkpoint_path);
      const auto preds = predict_manifest(estimator, manifest_path, tta);
      if (!pred_out.empty()) write_predictions(pred_out, preds);
      const std::string report = evaluate(preds).to_json().dump(2);
      out << report << '\n';
      if (!out_path.empty()) write_text_file(out_path, report + "\n");
    } else if (*metrics_cmd) {
      const auto a = read_predictions(pred_path);
      std::string text;
      if (compare_path.empty()) {
        const auto thresholds = thresholds_text.empty() ? default_cs_thresholds() : parse_int_list(thresholds_text);
        text = evaluate(a, thresholds).to_json().dump(2);
      } else {
        const auto b = read_predictions(compare_path);
        const auto [ea, eb] = aligned_errors(a, b);
        text = paired_t_test(ea, eb, num_comparisons, alpha).to_json().dump(2);
      }
      out << text << '\n';
      if (!out_path.empty()) write_text_file(out_path, text + "\n");
    } else if (*clean_run) {
      if (seed) clean_cfg.seed = *seed;
      std::filesystem::create_directories(out_path);
      const std::filesystem::path dir(out_path);
      const CleaningSummary summary =
          run_cleaning(embeddings_dir, clean_cfg, dir / "consensus.jsonl", dir / "review_queue.jsonl");
      for (const auto& w : summary.warnings) err << "warning: " << w << '\n';
      out << nlohmann::json{{"subjects", summary.consensus.size()},
                            {"ambiguous", summary.ambiguous_count()},
                            {"consensus", (dir / "consensus.jsonl").string()},
                            {"review_queue", (dir / "review_queue.jsonl").string()}}
                 .dump()
          << '\n';
    } else if (*review_cmd) {
      if (image_root.empty()) {
        if (const char* env = std::getenv("FPAGE_IMAGE_ROOT")) image_root = env;
      }
      ReviewStore store(read_consensus(consensus_path), decisions_path);
      ReviewServer server(store, image_root);
      const int bound = server.bind(host, port);
      out << "review service listening on http://" << host << ":" << bound << " (" << store.pending_count()
          << " pending)\n"
          << std::flush;
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      server.listen();
      g_server = nullptr;
    } else if (*probe_cmd) {
      const AgeEstimator estimator = load_estimator(checkpoint_path);
      const auto records = read_manifest(manifest_path, estimator.checkpoint().codec);
      const auto edges = edges_text.empty() ? default_age_edges() : parse_int_list(edges_text);
      const AttentionStats stats = probe_attention(records, estimator, edges);
      out << stats.to_csv();
      if (!out_path.empty()) {
        write_text_file(out_path + ".csv", stats.to_csv());
        write_text_file(out_path + ".json", stats.to_json().dump(2) + "\n");
      }
    } else if (*synth_faces) {
      const nlohmann::json desc =
          backbone_path.empty() ? nlohmann::json{{"type", "toy"}, {"config", nlohmann::json::object()}}
                                : read_json_file(backbone_path);
      const auto backbone = make_backbone(desc);
      const auto* toy = dynamic_cast<const ToyBackbone*>(backbone.get());
      if (!toy) throw InvalidArgument("synthetic faces need a toy backbone");
      const auto examples = make_age_dataset(*toy, count, SyntheticFaceConfig{}, seed.value_or(0));
      const auto manifest = write_age_dataset(out_path, examples);
      out << manifest.string() << '\n';
    } else if (*synth_embeddings) {
      const PlantedStore planted_store = make_planted_store(planted, seed.value_or(0));
      write_embedding_store(out_path, planted_store.store);
      out << nlohmann::json{{"subjects", planted_store.truth.size()}, {"out", out_path}}.dump() << '\n';
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  return kExitOk;
}

}  // namespace fpage
