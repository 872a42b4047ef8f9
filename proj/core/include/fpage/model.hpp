#pragma once

#include "fpage/age_head.hpp"
#include "fpage/backbone.hpp"
#include "fpage/fpa.hpp"
#include "fpage/label_codec.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fpage {

// Architecture choices that are not dictated by the backbone or the codec.
struct ModelConfig {
  int trunk_channels = 256;
  int norm_groups = 32;
  int attention_hidden = 0;  // 0 -> 2 * C
  bool block_diagonal_groups = false;
  bool hard_masks = false;

  bool operator==(const ModelConfig&) const = default;
};

// Mutable window onto one contiguous parameter array.
struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool decays = true;  // weight decay applies (weights only, never biases or norm affine)

  Eigen::Index size() const { return rows * cols; }
};

struct ModelParams {
  FpaParams fpa;
  AgeHeadParams head;

  static ModelParams zeros(const BackboneShape& shape, const LabelCodecConfig& codec, const ModelConfig& cfg);
  static ModelParams random(const BackboneShape& shape, const LabelCodecConfig& codec, const ModelConfig& cfg,
                            std::mt19937_64& rng);
  // Same-shaped container with every array zero (gradient/velocity buffers).
  ModelParams zeros_like() const;

  // Stable order; names like "fpa.group_w" or "head.block2.conv1_w".
  std::vector<ParamView> views();
  Eigen::Index parameter_count();
};

struct TrainingMeta {
  int epoch = 0;
  double val_mae = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

inline constexpr int kCheckpointVersion = 1;

struct ModelCheckpoint {
  ModelParams params;
  ModelConfig model;
  LabelCodecConfig codec;
  std::vector<std::string> class_names;
  nlohmann::json backbone;  // Backbone::description()
  TrainingMeta meta;

  FpaOptions fpa_options() const;
  // Codec K matches the FC width, class list matches C, parameter shapes are consistent.
  void validate() const;
  // Additionally requires the backbone's shape to match the FPA/head inputs.
  void validate_against(const Backbone& backbone) const;
};

// Self-describing archive: "FPAGECKP", u32 version, u64 header length, JSON
// header (metadata and array table), then raw little-endian float64 arrays.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

struct ForwardPass {
  FpaActivations fpa;
  HeadActivations head;
};

ForwardPass model_forward(const Tensor& low, const Tensor& high, const Tensor& masks, const ModelParams& params,
                          const FpaOptions& options);
// Accumulates into grads for dLoss/dlogits.
void model_backward(const Tensor& high, const ForwardPass& pass, const ModelParams& params, const FpaOptions& options,
                    const Matrix& grad_logits, ModelParams& grads);

// Stacks single-image bundles into batched tensors.
FeatureBundle stack_bundles(const std::vector<const FeatureBundle*>& bundles);

struct Prediction {
  double age = 0.0;
  AgeDistribution dist;
  Vector attention;  // from the un-mirrored pass
};

// Shared immutable checkpoint + backbone; predict() is safe to call concurrently.
class AgeEstimator {
 public:
  AgeEstimator(ModelCheckpoint checkpoint, std::shared_ptr<const Backbone> backbone);

  Prediction predict(const Image& image, const BoundingBox& bbox, bool flip_tta) const;
  // Batched inference over precomputed bundles (no TTA).
  std::vector<Prediction> predict_bundles(const std::vector<const FeatureBundle*>& bundles) const;

  const ModelCheckpoint& checkpoint() const { return checkpoint_; }
  const Backbone& backbone() const { return *backbone_; }

 private:
  ModelCheckpoint checkpoint_;
  std::shared_ptr<const Backbone> backbone_;
};

Prediction predict_age(const Image& image, const BoundingBox& bbox, const ModelCheckpoint& checkpoint,
                       const Backbone& backbone, bool flip_tta);

}  // namespace fpage
