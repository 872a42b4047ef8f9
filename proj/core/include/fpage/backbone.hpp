#pragma once

#include "fpage/image.hpp"
#include "fpage/label_codec.hpp"
#include "fpage/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace fpage {

struct DatasetRecord {
  std::string image_path;
  BoundingBox bbox;
  int age = 0;
  std::string subject_id;
};

// JSON Lines manifest: {"image_path", "bbox": [x0, y0, x1, y1], "age", "subject_id"}.
// Relative image paths are resolved against the manifest's directory. Fractional
// ages are rounded; ages outside the codec's range are rejected with the line number.
std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path, const LabelCodecConfig& codec);
void write_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
nlohmann::json to_json(const DatasetRecord& record);

// Frozen feature provider output for a single image. All three maps share the
// (h, w) grid at 1/8 of the input resolution.
struct FeatureBundle {
  Tensor low;    // low-level features, 256 channels by default
  Tensor high;   // high-level features, 512 channels by default
  Tensor masks;  // per-pixel region probabilities, C channels

  // Throws InvalidArgument if grids differ or a mask pixel is negative or does not sum to 1.
  void validate(double tolerance = 1e-5) const;
};

struct BackboneShape {
  int low_channels = 256;
  int high_channels = 512;
  int num_classes = 11;
  bool operator==(const BackboneShape&) const = default;
};

// Region order used throughout when C = 11.
const std::vector<std::string>& default_class_names();

// Immutable after construction; extract() may be called concurrently.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual FeatureBundle extract(const Image& image, const BoundingBox& bbox) const = 0;
  virtual BackboneShape shape() const = 0;
  virtual const std::vector<std::string>& class_names() const = 0;
  // {"type": ..., "config": {...}}; enough for make_backbone() to rebuild it.
  virtual nlohmann::json description() const = 0;
};

struct ToyBackboneConfig {
  std::uint64_t seed = 0;
  int low_channels = 256;
  int high_channels = 512;
  int num_classes = 11;
  double mask_sharpness = 4.0;
  // Strength of the extra high-level response to age_pattern().
  double age_signal_gain = 1.0;

  nlohmann::json to_json() const;
  static ToyBackboneConfig from_json(const nlohmann::json& j);
};

// Seeded random-projection backbone. Each 8x8 RGB patch maps to one grid cell:
//   low  = tanh(A * (avgpool2(patch) - 0.5))
//   high = tanh(W * (patch - 0.5) + gain * u * <age_pattern, patch>)
//   mask = softmax_k(sharpness * <region_pattern_k, patch>)
// Region and age patterns are orthonormal, zero-mean and mirror-symmetric inside
// a patch, so constant images give uniform masks and horizontal flips move
// content without changing its response.
class ToyBackbone final : public Backbone {
 public:
  static constexpr int kPatch = 8;
  static constexpr int kPatchDim = kPatch * kPatch * 3;

  explicit ToyBackbone(ToyBackboneConfig cfg);

  FeatureBundle extract(const Image& image, const BoundingBox& bbox) const override;
  BackboneShape shape() const override;
  const std::vector<std::string>& class_names() const override { return class_names_; }
  nlohmann::json description() const override;

  const ToyBackboneConfig& config() const { return cfg_; }
  const Vector& region_pattern(int k) const { return region_patterns_.at(k); }
  const Vector& age_pattern() const { return age_pattern_; }
  // Flattened patch index for pixel (row, col, channel) inside a patch.
  static int patch_index(int row, int col, int channel) { return (row * kPatch + col) * 3 + channel; }

 private:
  ToyBackboneConfig cfg_;
  std::vector<std::string> class_names_;
  std::vector<Vector> region_patterns_;
  Vector age_pattern_;
  Matrix low_proj_;   // low_channels x 48
  Matrix high_proj_;  // high_channels x 192
  Vector age_dir_;    // high_channels
};

std::shared_ptr<const Backbone> make_backbone(const nlohmann::json& description);

}  // namespace fpage
