#include "fpage/synthetic.hpp"

#include "fpage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fpage {

namespace {

constexpr int kGrid = kSyntheticFaceSize / ToyBackbone::kPatch;

const char* const kLayout[kGrid][kGrid] = {
    {"background", "hair", "hair", "background"},
    {"left_eyebrow", "left_eye", "right_eye", "right_eyebrow"},
    {"skin", "nose", "nose", "skin"},
    {"upper_lip", "inner_mouth", "lower_lip", "skin"},
};

int class_index(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidArgument("synthetic faces need region '" + name + "'");
  return static_cast<int>(it - names.begin());
}

std::string numbered(const std::string& prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, i);
  return prefix + buf;
}

Vector unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v.normalized();
}

std::vector<double> perturbed(const Vector& center, double spread, std::mt19937_64& rng) {
  const Vector noise = unit_vector(static_cast<int>(center.size()), rng) * spread;
  const Vector v = (center + noise).normalized();
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

Image render_face(const ToyBackbone& backbone, int age, double distractor, const SyntheticFaceConfig& cfg,
                  std::mt19937_64& rng) {
  if (cfg.num_ages < 2) throw InvalidArgument("synthetic faces: num_ages must be >= 2");
  if (age < 0 || age >= cfg.num_ages) throw InvalidArgument("synthetic faces: age " + std::to_string(age) + " out of range");
  const auto& names = backbone.class_names();
  const double age_coef = cfg.age_amp * (2.0 * age / (cfg.num_ages - 1) - 1.0);
  const Vector& age_pattern = backbone.age_pattern();
  std::normal_distribution<double> noise(0.0, cfg.noise_sd);

  Image img(kSyntheticFaceSize, kSyntheticFaceSize);
  for (int gi = 0; gi < kGrid; ++gi) {
    for (int gj = 0; gj < kGrid; ++gj) {
      const std::string region = kLayout[gi][gj];
      Vector cell = cfg.region_amp * backbone.region_pattern(class_index(names, region));
      if (region == "left_eye" || region == "right_eye") cell += age_coef * age_pattern;
      if (region == "nose") cell += distractor * age_pattern;
      for (int r = 0; r < ToyBackbone::kPatch; ++r) {
        for (int c = 0; c < ToyBackbone::kPatch; ++c) {
          for (int ch = 0; ch < 3; ++ch) {
            double v = 0.5 + cell[ToyBackbone::patch_index(r, c, ch)] + noise(rng);
            v = std::clamp(v, 0.0, 1.0);
            img.at(gi * ToyBackbone::kPatch + r, gj * ToyBackbone::kPatch + c, ch) =
                static_cast<float>(std::lround(v * 255.0)) / 255.0f;
          }
        }
      }
    }
  }
  return img;
}

std::vector<TrainingExample> make_age_dataset(const ToyBackbone& backbone, int count, const SyntheticFaceConfig& cfg,
                                              std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("synthetic dataset: count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> age_dist(0, cfg.num_ages - 1);
  std::uniform_real_distribution<double> distractor(-cfg.distractor_amp, cfg.distractor_amp);
  std::vector<TrainingExample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    TrainingExample ex;
    ex.age = age_dist(rng);
    ex.image = render_face(backbone, ex.age, distractor(rng), cfg, rng);
    ex.bbox = BoundingBox{0, 0, kSyntheticFaceSize, kSyntheticFaceSize};
    ex.image_path = numbered("face_", i, 5) + ".png";
    out.push_back(std::move(ex));
  }
  return out;
}

std::filesystem::path write_age_dataset(const std::filesystem::path& dir, const std::vector<TrainingExample>& examples) {
  std::filesystem::create_directories(dir);
  std::vector<DatasetRecord> records;
  for (const auto& ex : examples) {
    const std::filesystem::path name = std::filesystem::path(ex.image_path).filename();
    save_image(ex.image, dir / name);
    records.push_back(DatasetRecord{name.string(), ex.bbox, ex.age, name.stem().string()});
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

PlantedStore make_planted_store(const PlantedStoreConfig& cfg, std::uint64_t seed) {
  if (cfg.num_subjects < 1 || cfg.num_ambiguous < 0 || cfg.num_ambiguous > cfg.num_subjects) {
    throw InvalidArgument("planted store: bad subject counts");
  }
  if (cfg.main_size < 3 || cfg.dim < 2 || cfg.clear_ratios.empty()) throw InvalidArgument("planted store: bad sizes");
  std::mt19937_64 rng(seed);

  std::vector<bool> ambiguous(cfg.num_subjects, false);
  std::fill(ambiguous.begin(), ambiguous.begin() + cfg.num_ambiguous, true);
  std::shuffle(ambiguous.begin(), ambiguous.end(), rng);

  PlantedStore out;
  std::uniform_int_distribution<std::size_t> pick_ratio(0, cfg.clear_ratios.size() - 1);
  for (int s = 0; s < cfg.num_subjects; ++s) {
    PlantedSubject truth;
    truth.subject_id = numbered("subject_", s, 3);
    truth.expect_ambiguous = ambiguous[s];
    truth.ratio = ambiguous[s] ? cfg.ambiguous_ratio : cfg.clear_ratios[pick_ratio(rng)];
    truth.contaminant_size = static_cast<int>(std::lround(truth.ratio * cfg.main_size));

    const Vector main_center = unit_vector(cfg.dim, rng);
    const Vector other_center = unit_vector(cfg.dim, rng);
    struct Draft {
      std::string image_id;
      std::vector<double> embedding;
      bool main;
    };
    std::vector<Draft> drafts;
    std::vector<std::string> main_images;
    for (int i = 0; i < cfg.main_size; ++i) {
      main_images.push_back(truth.subject_id + "/" + numbered("img_", i, 3) + ".png");
      drafts.push_back({main_images.back(), perturbed(main_center, cfg.spread, rng), true});
    }
    std::uniform_int_distribution<int> pick_main(0, cfg.main_size - 1);
    std::vector<int> shared(cfg.main_size);
    for (int i = 0; i < cfg.main_size; ++i) shared[i] = i;
    std::shuffle(shared.begin(), shared.end(), rng);
    int next_image = cfg.main_size;
    for (int i = 0; i < truth.contaminant_size; ++i) {
      // Half the contaminants appear in group photos with the subject, one per photo.
      const bool in_group_photo = i % 2 == 0 && i / 2 < cfg.main_size;
      const std::string image = in_group_photo ? main_images[shared[i / 2]]
                                           : truth.subject_id + "/" + numbered("img_", next_image++, 3) + ".png";
      drafts.push_back({image, perturbed(other_center, cfg.spread, rng), false});
    }
    for (int i = 0; i < cfg.outliers; ++i) {
      drafts.push_back({truth.subject_id + "/" + numbered("img_", next_image++, 3) + ".png",
                        perturbed(unit_vector(cfg.dim, rng), 0.0, rng), false});
    }
    for (int i = 0; i < cfg.lookalikes; ++i) {
      drafts.push_back({main_images[pick_main(rng)], perturbed(main_center, cfg.spread, rng), false});
    }

    std::vector<int> ids(drafts.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::shuffle(ids.begin(), ids.end(), rng);
    auto& faces = out.store[truth.subject_id];
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      FaceEmbeddingRecord r;
      r.face_id = truth.subject_id + "_" + numbered("f", ids[i], 3);
      r.image_id = drafts[i].image_id;
      r.subject_id = truth.subject_id;
      r.bbox = {0.0, 0.0, static_cast<double>(kSyntheticFaceSize), static_cast<double>(kSyntheticFaceSize)};
      r.embedding = drafts[i].embedding;
      if (drafts[i].main) truth.main_faces.push_back(r.face_id);
      faces.push_back(std::move(r));
    }
    std::sort(faces.begin(), faces.end(), [](const auto& a, const auto& b) { return a.face_id < b.face_id; });
    std::sort(truth.main_faces.begin(), truth.main_faces.end());
    out.truth.push_back(std::move(truth));
  }
  return out;
}

}  // namespace fpage
