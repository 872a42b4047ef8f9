#include "fpage/backbone.hpp"

#include "fpage/errors.hpp"
#include "fpage/jsonl.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace fpage {

namespace {

constexpr int kLowDim = 4 * 4 * 3;

std::vector<std::string> make_class_names(int num_classes) {
  if (num_classes == static_cast<int>(default_class_names().size())) return default_class_names();
  std::vector<std::string> names;
  for (int k = 0; k < num_classes; ++k) names.push_back("region_" + std::to_string(k));
  return names;
}

// Random vector that is mirror-symmetric within the patch and zero-mean.
Vector symmetric_pattern(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(ToyBackbone::kPatchDim);
  for (int r = 0; r < ToyBackbone::kPatch; ++r) {
    for (int c = 0; c < ToyBackbone::kPatch / 2; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double x = normal(rng);
        v[ToyBackbone::patch_index(r, c, ch)] = x;
        v[ToyBackbone::patch_index(r, ToyBackbone::kPatch - 1 - c, ch)] = x;
      }
    }
  }
  v.array() -= v.mean();
  return v;
}

void orthonormalize_against(Vector& v, const std::vector<Vector>& basis) {
  for (const Vector& b : basis) v -= b.dot(v) * b;
  v.normalize();
}

}  // namespace

const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names = {
      "background", "skin",      "left_eyebrow", "right_eyebrow", "left_eye", "right_eye",
      "nose",       "upper_lip", "inner_mouth",  "lower_lip",     "hair"};
  return names;
}

nlohmann::json to_json(const DatasetRecord& r) {
  return {{"image_path", r.image_path},
          {"bbox", {r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max}},
          {"age", r.age},
          {"subject_id", r.subject_id}};
}

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path, const LabelCodecConfig& codec) {
  const auto base = path.parent_path();
  std::vector<DatasetRecord> out;
  for_each_json_line(path, [&](const nlohmann::json& j, int line) {
    DatasetRecord r;
    try {
      r.image_path = j.at("image_path").get<std::string>();
      const auto& b = j.at("bbox");
      if (!b.is_array() || b.size() != 4) throw InvalidArgument("bbox must have 4 elements");
      r.bbox = BoundingBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      r.age = round_age(j.at("age").get<double>());
      r.subject_id = j.at("subject_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw IoError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    if (!r.bbox.well_formed()) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": bbox corners out of order");
    }
    if (r.age < 0 || r.age > codec.num_classes - 1) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": age " + std::to_string(r.age) +
                            " outside [0, " + std::to_string(codec.num_classes - 1) + "]");
    }
    if (std::filesystem::path(r.image_path).is_relative()) r.image_path = (base / r.image_path).string();
    out.push_back(std::move(r));
  });
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  JsonLinesWriter writer(path);
  for (const auto& r : records) writer.write(to_json(r));
  writer.close();
}

void FeatureBundle::validate(double tolerance) const {
  if (!low.same_grid(high) || !low.same_grid(masks)) {
    throw InvalidArgument("feature bundle grids differ: low " + low.shape_string() + ", high " + high.shape_string() +
                          ", masks " + masks.shape_string());
  }
  if ((masks.data.array() < 0.0).any()) throw InvalidArgument("feature bundle: negative mask value");
  const Eigen::RowVectorXd sums = masks.data.colwise().sum();
  const double worst = (sums.array() - 1.0).abs().maxCoeff();
  if (!(worst <= tolerance)) {
    throw InvalidArgument("feature bundle: mask pixel sums deviate from 1 by " + std::to_string(worst));
  }
}

nlohmann::json ToyBackboneConfig::to_json() const {
  return {{"seed", seed},
          {"low_channels", low_channels},
          {"high_channels", high_channels},
          {"num_classes", num_classes},
          {"mask_sharpness", mask_sharpness},
          {"age_signal_gain", age_signal_gain}};
}

ToyBackboneConfig ToyBackboneConfig::from_json(const nlohmann::json& j) {
  ToyBackboneConfig c;
  c.seed = j.value("seed", c.seed);
  c.low_channels = j.value("low_channels", c.low_channels);
  c.high_channels = j.value("high_channels", c.high_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.mask_sharpness = j.value("mask_sharpness", c.mask_sharpness);
  c.age_signal_gain = j.value("age_signal_gain", c.age_signal_gain);
  return c;
}

ToyBackbone::ToyBackbone(ToyBackboneConfig cfg) : cfg_(cfg), class_names_(make_class_names(cfg.num_classes)) {
  if (cfg_.low_channels < 1 || cfg_.high_channels < 1) throw InvalidArgument("toy backbone: channel counts must be positive");
  if (cfg_.num_classes < 1 || cfg_.num_classes >= kPatchDim / 2 - 2) {
    throw InvalidArgument("toy backbone: unsupported num_classes " + std::to_string(cfg_.num_classes));
  }
  std::mt19937_64 rng(cfg_.seed);
  std::vector<Vector> basis;
  for (int k = 0; k <= cfg_.num_classes; ++k) {
    Vector v = symmetric_pattern(rng);
    orthonormalize_against(v, basis);
    basis.push_back(v);
  }
  age_pattern_ = basis.back();
  basis.pop_back();
  region_patterns_ = std::move(basis);

  std::normal_distribution<double> normal(0.0, 1.0);
  low_proj_.resize(cfg_.low_channels, kLowDim);
  for (Eigen::Index i = 0; i < low_proj_.size(); ++i) low_proj_.data()[i] = normal(rng) * 4.0 / std::sqrt(double(kLowDim));
  high_proj_.resize(cfg_.high_channels, kPatchDim);
  for (Eigen::Index i = 0; i < high_proj_.size(); ++i) high_proj_.data()[i] = normal(rng) * 4.0 / std::sqrt(double(kPatchDim));
  age_dir_.resize(cfg_.high_channels);
  for (Eigen::Index i = 0; i < age_dir_.size(); ++i) age_dir_[i] = normal(rng);
}

BackboneShape ToyBackbone::shape() const {
  return BackboneShape{cfg_.low_channels, cfg_.high_channels, cfg_.num_classes};
}

nlohmann::json ToyBackbone::description() const {
  return {{"type", "toy"}, {"config", cfg_.to_json()}};
}

FeatureBundle ToyBackbone::extract(const Image& image, const BoundingBox& bbox) const {
  if (image.empty() || image.height < kPatch || image.width < kPatch) {
    throw InvalidArgument("toy backbone: image must be at least 8x8, got " + std::to_string(image.height) + "x" +
                          std::to_string(image.width));
  }
  if (!bbox.intersects(image.width, image.height)) throw InvalidArgument("toy backbone: bbox does not intersect the image");

  const int h = image.height / kPatch;
  const int w = image.width / kPatch;
  FeatureBundle out{Tensor(1, h, w, cfg_.low_channels), Tensor(1, h, w, cfg_.high_channels),
                    Tensor(1, h, w, cfg_.num_classes)};
  Vector patch(kPatchDim);
  Vector pooled(kLowDim);
  Vector logits(cfg_.num_classes);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int r = 0; r < kPatch; ++r)
        for (int c = 0; c < kPatch; ++c)
          for (int ch = 0; ch < 3; ++ch) patch[patch_index(r, c, ch)] = image.at(i * kPatch + r, j * kPatch + c, ch);
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          for (int ch = 0; ch < 3; ++ch) {
            const double s = patch[patch_index(2 * r, 2 * c, ch)] + patch[patch_index(2 * r + 1, 2 * c, ch)] +
                             patch[patch_index(2 * r, 2 * c + 1, ch)] + patch[patch_index(2 * r + 1, 2 * c + 1, ch)];
            pooled[(r * 4 + c) * 3 + ch] = 0.25 * s - 0.5;
          }
      const int col = i * w + j;
      out.low.data.col(col) = (low_proj_ * pooled).array().tanh();
      const double age_response = age_pattern_.dot(patch);
      out.high.data.col(col) =
          (high_proj_ * (patch.array() - 0.5).matrix() + cfg_.age_signal_gain * age_response * age_dir_).array().tanh();
      for (int k = 0; k < cfg_.num_classes; ++k) logits[k] = cfg_.mask_sharpness * region_patterns_[k].dot(patch);
      const double mx = logits.maxCoeff();
      Vector e = (logits.array() - mx).exp();
      out.masks.data.col(col) = e / e.sum();
    }
  }
  return out;
}

std::shared_ptr<const Backbone> make_backbone(const nlohmann::json& description) {
  const std::string type = description.value("type", "");
  if (type == "toy") return std::make_shared<ToyBackbone>(ToyBackboneConfig::from_json(description.value("config", nlohmann::json::object())));
  throw InvalidArgument("unsupported backbone type '" + type + "'");
}

}  // namespace fpage
