#pragma once

#include "fpage/backbone.hpp"
#include "fpage/cleaning.hpp"
#include "fpage/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fpage {

// Renders faces for the toy backbone on a 4x4 grid of 8x8 cells:
//   background  hair         hair        background
//   left_brow   left_eye     right_eye   right_brow
//   skin        nose         nose        skin
//   upper_lip   inner_mouth  lower_lip   skin
// Each cell is 0.5 + region_amp * region_pattern. Eye cells add
// age_amp * (2 * age / (K - 1) - 1) * age_pattern; nose cells add the same
// pattern with a random coefficient of size distractor_amp, unrelated to age
// (off by default, so only the eyes carry information).
struct SyntheticFaceConfig {
  double region_amp = 1.0;
  double age_amp = 0.3;
  double distractor_amp = 0.0;
  double noise_sd = 0.003;
  int num_ages = 101;
};

inline constexpr int kSyntheticFaceSize = 32;

// Pixels are quantized to 8 bits so in-memory images equal their PNG round trip.
Image render_face(const ToyBackbone& backbone, int age, double distractor, const SyntheticFaceConfig& cfg,
                  std::mt19937_64& rng);

// Ages uniform over [0, num_ages); image_path is "face_<index>.png".
std::vector<TrainingExample> make_age_dataset(const ToyBackbone& backbone, int count, const SyntheticFaceConfig& cfg,
                                              std::uint64_t seed);

// Writes PNGs plus manifest.jsonl into dir and returns the manifest path.
std::filesystem::path write_age_dataset(const std::filesystem::path& dir, const std::vector<TrainingExample>& examples);

struct PlantedStoreConfig {
  int num_subjects = 50;
  int num_ambiguous = 10;
  int main_size = 20;
  double ambiguous_ratio = 0.8;
  std::vector<double> clear_ratios = {0.0, 0.3, 0.4, 0.5, 0.6};
  int dim = 64;
  double spread = 0.25;  // norm of the within-cluster perturbation
  int outliers = 2;
  // Extra faces near the main identity that share an image with a main face.
  int lookalikes = 0;
};

struct PlantedSubject {
  std::string subject_id;
  std::vector<std::string> main_faces;  // sorted
  int contaminant_size = 0;
  double ratio = 0.0;
  bool expect_ambiguous = false;
};

struct PlantedStore {
  std::map<std::string, std::vector<FaceEmbeddingRecord>> store;
  std::vector<PlantedSubject> truth;  // sorted by subject_id
};

// Each subject has a main cluster, a contaminant identity of size
// round(ratio * main_size) whose faces share images with main faces, and
// isolated outliers.
PlantedStore make_planted_store(const PlantedStoreConfig& cfg, std::uint64_t seed);

}  // namespace fpage
