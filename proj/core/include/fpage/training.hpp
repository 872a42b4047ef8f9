#pragma once

#include "fpage/backbone.hpp"
#include "fpage/label_codec.hpp"
#include "fpage/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fpage {

struct LossConfig {
  double lambda = 1.0;  // weight of the L1 term

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double kl = 0.0;
  double l1 = 0.0;
};

// KL(q || p) + lambda * |E_p[k] - y|. Terms with q_k = 0 contribute 0; p_k = 0
// with q_k > 0 raises NumericalFault.
LossValue loss(const AgeDistribution& pred, const AgeDistribution& target, int age, const LossConfig& cfg);

// d loss / d logits when pred = softmax(logits):
//   (p - q) + lambda * sign(yhat - y) * p_k * (k - yhat)
Vector loss_logit_gradient(const AgeDistribution& pred, const AgeDistribution& target, int age, const LossConfig& cfg);

// Ranges are half-widths of uniform draws.
struct AugmentConfig {
  bool hflip = true;
  bool scale = false;
  bool rotation = false;
  bool translation = false;
  bool bbox_jitter = false;
  double scale_range = 0.10;        // relative
  double rotation_degrees = 15.0;
  double translation_range = 0.05;  // fraction of image size
  double jitter_range = 0.10;       // fraction of box size

  bool geometric() const { return scale || rotation || translation; }
};

struct TrainConfig {
  int batch_size = 80;
  double weight_decay = 0.0005;
  double momentum = 0.9;
  double lr_start = 0.0001;
  double lr_peak = 0.01;
  int warmup_epochs = 5;
  double decay_gamma = 0.9;
  int patience = 10;
  int max_epochs = 90;
  std::uint64_t seed = 0;
  bool val_flip_tta = false;
  AugmentConfig augment;
  ModelConfig model;
  LabelCodecConfig codec;

  void validate() const;
};

// key = value lines, '#' comments. Keys mirror the struct: batch_size,
// lr_peak, augment.hflip, model.trunk_channels, codec.num_classes, ...
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string to_config_text(const TrainConfig& cfg);

// Linear warmup from lr_start to lr_peak, then lr_peak * gamma^(epoch - warmup).
double lr_at(double epoch, const TrainConfig& cfg);

// Applies the enabled augmentations; bbox is transformed alongside the image.
Image augment_example(const Image& image, BoundingBox& bbox, const AugmentConfig& cfg, std::mt19937_64& rng);

struct TrainingExample {
  Image image;
  BoundingBox bbox;
  int age = 0;
  std::string image_path;
};

std::vector<TrainingExample> load_examples(const std::vector<DatasetRecord>& records);

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  ModelCheckpoint checkpoint;  // best validation MAE, earliest epoch on ties
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// SGD with momentum and decoupled-from-bias weight decay over the FPA and head
// parameters; the backbone stays frozen. Deterministic for a given seed.
TrainResult train(const std::vector<TrainingExample>& train_set, const std::vector<TrainingExample>& val_set,
                  std::shared_ptr<const Backbone> backbone, const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const EpochCallback& on_epoch = {});

// Mean absolute error of expectation-decoded predictions.
double validation_mae(const AgeEstimator& estimator, const std::vector<TrainingExample>& examples, bool flip_tta);

// Stable 64-bit mixing for deriving per-(epoch, sample) RNG seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace fpage
