#include "fixtures.hpp"

#include <atomic>
#include <unistd.h>

namespace fixtures {

fpage::Tensor random_tensor(int batch, int h, int w, int channels, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  fpage::Tensor t(batch, h, w, channels);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return t;
}

fpage::Tensor random_masks(int batch, int h, int w, int classes, std::mt19937_64& rng) {
  fpage::Tensor t = random_tensor(batch, h, w, classes, rng, 2.0);
  for (Eigen::Index col = 0; col < t.data.cols(); ++col) {
    fpage::Vector e = t.data.col(col).array().exp();
    t.data.col(col) = e / e.sum();
  }
  return t;
}

SmallInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> side(1, 8);
  std::uniform_int_distribution<int> classes(1, 4);
  std::uniform_int_distribution<int> extra(0, 3);
  std::uniform_int_distribution<int> batch(1, 3);

  const int n = batch(rng);
  const int h = side(rng);
  const int w = side(rng);
  const int c = classes(rng);
  const int group = 1 + extra(rng) % 3;
  fpage::BackboneShape shape{2 + extra(rng), c * group + extra(rng), c};

  SmallInstance inst;
  inst.codec = fpage::LabelCodecConfig{7 + 2 * extra(rng), 2.0};
  fpage::ModelConfig model;
  model.norm_groups = 1 + extra(rng) % 2;
  model.trunk_channels = model.norm_groups * (1 + extra(rng) % 3);
  model.attention_hidden = 1 + extra(rng);
  model.block_diagonal_groups = extra(rng) == 0 && shape.high_channels >= c;

  inst.params = fpage::ModelParams::random(shape, inst.codec, model, rng);
  // Perturb every entry so biases and affines are exercised, keeping weights small.
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (auto& view : inst.params.views()) {
    for (Eigen::Index i = 0; i < view.size(); ++i) view.data[i] += jitter(rng);
  }
  if (model.block_diagonal_groups) inst.params.fpa.group_w.array() *= inst.params.fpa.block_mask().array();

  inst.features.low = random_tensor(n, h, w, shape.low_channels, rng);
  inst.features.high = random_tensor(n, h, w, shape.high_channels, rng);
  inst.features.masks = random_masks(n, h, w, c, rng);
  std::uniform_int_distribution<int> age(0, inst.codec.num_classes - 1);
  for (int i = 0; i < n; ++i) inst.ages.push_back(age(rng));
  return inst;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("fpage_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace fixtures
