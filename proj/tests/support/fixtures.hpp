#pragma once

#include "fpage/backbone.hpp"
#include "fpage/label_codec.hpp"
#include "fpage/model.hpp"
#include "fpage/tensor.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fixtures {

// Uniform entries in [-scale, scale].
fpage::Tensor random_tensor(int batch, int h, int w, int channels, std::mt19937_64& rng, double scale = 1.0);

// Per-pixel softmax of random logits: valid soft masks.
fpage::Tensor random_masks(int batch, int h, int w, int classes, std::mt19937_64& rng);

struct SmallInstance {
  fpage::FeatureBundle features;  // batched
  fpage::ModelParams params;
  fpage::LabelCodecConfig codec;
  std::vector<int> ages;
};

// (h, w) <= 8x8, C <= 4, narrow channels, a handful of age bins. Parameters are
// randomized everywhere, including biases and normalization affines.
SmallInstance random_instance(std::mt19937_64& rng);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
