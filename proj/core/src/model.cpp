#include "fpage/model.hpp"

#include "fpage/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fpage {

namespace {

constexpr char kMagic[8] = {'F', 'P', 'A', 'G', 'E', 'C', 'K', 'P'};

FpaDims fpa_dims(const BackboneShape& shape, const ModelConfig& cfg) {
  return FpaDims{shape.high_channels, shape.num_classes, cfg.attention_hidden};
}

HeadDims head_dims(const BackboneShape& shape, const LabelCodecConfig& codec, const ModelConfig& cfg) {
  const FpaDims f = fpa_dims(shape, cfg);
  return HeadDims{shape.low_channels, f.grouped_channels(), cfg.trunk_channels, cfg.norm_groups, codec.num_classes};
}

template <typename Dense>
void add_view(std::vector<ParamView>& out, std::string name, Dense& m, bool decays) {
  out.push_back(ParamView{std::move(name), m.data(), m.rows(), m.cols(), decays});
}

nlohmann::json model_config_json(const ModelConfig& m) {
  return {{"trunk_channels", m.trunk_channels},
          {"norm_groups", m.norm_groups},
          {"attention_hidden", m.attention_hidden},
          {"block_diagonal_groups", m.block_diagonal_groups},
          {"hard_masks", m.hard_masks}};
}

Prediction run_predict(const ModelCheckpoint& ckpt, const Backbone& backbone, const Image& image,
                       const BoundingBox& bbox, bool flip_tta) {
  const FeatureBundle bundle = backbone.extract(image, bbox);
  const ForwardPass pass = model_forward(bundle.low, bundle.high, bundle.masks, ckpt.params, ckpt.fpa_options());
  Prediction out;
  out.dist = pass.head.distribution(0);
  out.attention = pass.fpa.attention.col(0);
  if (flip_tta) {
    const Image mirrored = image.mirrored();
    const FeatureBundle fb = backbone.extract(mirrored, bbox.mirrored(image.width));
    const ForwardPass fp = model_forward(fb.low, fb.high, fb.masks, ckpt.params, ckpt.fpa_options());
    out.dist = average(out.dist, fp.head.distribution(0));
  }
  out.age = decode_expectation(out.dist);
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const BackboneShape& shape, const LabelCodecConfig& codec, const ModelConfig& cfg) {
  codec.validate();
  ModelParams p;
  p.fpa = FpaParams::zeros(fpa_dims(shape, cfg), cfg.block_diagonal_groups);
  p.head = AgeHeadParams::zeros(head_dims(shape, codec, cfg));
  return p;
}

ModelParams ModelParams::random(const BackboneShape& shape, const LabelCodecConfig& codec, const ModelConfig& cfg,
                                std::mt19937_64& rng) {
  codec.validate();
  ModelParams p;
  p.fpa = FpaParams::random(fpa_dims(shape, cfg), rng, cfg.block_diagonal_groups);
  p.head = AgeHeadParams::random(head_dims(shape, codec, cfg), rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& v : z.views()) std::fill(v.data, v.data + v.size(), 0.0);
  return z;
}

std::vector<ParamView> ModelParams::views() {
  std::vector<ParamView> v;
  add_view(v, "fpa.group_w", fpa.group_w, true);
  add_view(v, "fpa.group_b", fpa.group_b, false);
  add_view(v, "fpa.fc1_w", fpa.fc1_w, true);
  add_view(v, "fpa.fc1_b", fpa.fc1_b, false);
  add_view(v, "fpa.fc2_w", fpa.fc2_w, true);
  add_view(v, "fpa.fc2_b", fpa.fc2_b, false);
  add_view(v, "head.fuse_w", head.fuse_w, true);
  add_view(v, "head.fuse_b", head.fuse_b, false);
  for (int i = 0; i < kNumResidualBlocks; ++i) {
    auto& b = head.blocks[i];
    const std::string pre = "head.block" + std::to_string(i) + ".";
    add_view(v, pre + "norm1_gamma", b.norm1_gamma, false);
    add_view(v, pre + "norm1_beta", b.norm1_beta, false);
    add_view(v, pre + "conv1_w", b.conv1_w, true);
    add_view(v, pre + "conv1_b", b.conv1_b, false);
    add_view(v, pre + "norm2_gamma", b.norm2_gamma, false);
    add_view(v, pre + "norm2_beta", b.norm2_beta, false);
    add_view(v, pre + "conv2_w", b.conv2_w, true);
    add_view(v, pre + "conv2_b", b.conv2_b, false);
  }
  add_view(v, "head.fc_w", head.fc_w, true);
  add_view(v, "head.fc_b", head.fc_b, false);
  return v;
}

Eigen::Index ModelParams::parameter_count() {
  Eigen::Index n = 0;
  for (const auto& v : views()) n += v.size();
  return n;
}

FpaOptions ModelCheckpoint::fpa_options() const {
  FpaOptions o;
  o.hard_masks = model.hard_masks;
  return o;
}

void ModelCheckpoint::validate() const {
  codec.validate();
  params.fpa.validate();
  params.head.validate();
  if (params.head.dims.age_bins != codec.num_classes) {
    throw InvalidArgument("checkpoint: codec has K=" + std::to_string(codec.num_classes) + " but the FC emits " +
                          std::to_string(params.head.dims.age_bins) + " bins");
  }
  if (static_cast<int>(class_names.size()) != params.fpa.dims.num_classes) {
    throw InvalidArgument("checkpoint: " + std::to_string(class_names.size()) + " class names for C=" +
                          std::to_string(params.fpa.dims.num_classes));
  }
  if (params.head.dims.fpa_channels != params.fpa.dims.grouped_channels()) {
    throw InvalidArgument("checkpoint: head expects " + std::to_string(params.head.dims.fpa_channels) +
                          " FPA channels, FPA emits " + std::to_string(params.fpa.dims.grouped_channels()));
  }
}

void ModelCheckpoint::validate_against(const Backbone& backbone) const {
  validate();
  const BackboneShape s = backbone.shape();
  if (s.num_classes != params.fpa.dims.num_classes || s.high_channels != params.fpa.dims.high_channels ||
      s.low_channels != params.head.dims.low_channels) {
    throw InvalidArgument("checkpoint expects backbone (low=" + std::to_string(params.head.dims.low_channels) +
                          ", high=" + std::to_string(params.fpa.dims.high_channels) +
                          ", C=" + std::to_string(params.fpa.dims.num_classes) + ") but got (low=" +
                          std::to_string(s.low_channels) + ", high=" + std::to_string(s.high_channels) +
                          ", C=" + std::to_string(s.num_classes) + ")");
  }
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  ckpt.validate();
  ModelCheckpoint copy = ckpt;
  auto views = copy.params.views();

  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& v : views) arrays.push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
  const auto& fd = ckpt.params.fpa.dims;
  nlohmann::json header = {
      {"format", "fpage-checkpoint"},
      {"version", kCheckpointVersion},
      {"dtype", "float64-le"},
      {"codec", {{"num_classes", ckpt.codec.num_classes}, {"sigma", ckpt.codec.sigma}}},
      {"class_names", ckpt.class_names},
      {"backbone", ckpt.backbone},
      {"backbone_shape",
       {{"low_channels", ckpt.params.head.dims.low_channels},
        {"high_channels", fd.high_channels},
        {"num_classes", fd.num_classes}}},
      {"model", model_config_json(ckpt.model)},
      {"training_meta",
       {{"epoch", ckpt.meta.epoch},
        {"val_mae", std::isfinite(ckpt.meta.val_mae) ? nlohmann::json(ckpt.meta.val_mae) : nlohmann::json(nullptr)},
        {"seed", ckpt.meta.seed}}},
      {"arrays", arrays},
  };
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& v : views) {
    out.write(reinterpret_cast<const char*>(v.data), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(path.string() + " is not an fpage checkpoint");
  if (version != static_cast<std::uint32_t>(kCheckpointVersion)) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (len > (std::uint64_t{1} << 30)) throw IoError(path.string() + ": implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string() + ": truncated header");

  ModelCheckpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("version").get<int>() != kCheckpointVersion) throw IoError(path.string() + ": header version mismatch");
    ckpt.codec.num_classes = header.at("codec").at("num_classes").get<int>();
    ckpt.codec.sigma = header.at("codec").at("sigma").get<double>();
    ckpt.class_names = header.at("class_names").get<std::vector<std::string>>();
    ckpt.backbone = header.at("backbone");
    const auto& m = header.at("model");
    ckpt.model.trunk_channels = m.at("trunk_channels").get<int>();
    ckpt.model.norm_groups = m.at("norm_groups").get<int>();
    ckpt.model.attention_hidden = m.at("attention_hidden").get<int>();
    ckpt.model.block_diagonal_groups = m.at("block_diagonal_groups").get<bool>();
    ckpt.model.hard_masks = m.at("hard_masks").get<bool>();
    const auto& bs = header.at("backbone_shape");
    const BackboneShape shape{bs.at("low_channels").get<int>(), bs.at("high_channels").get<int>(),
                              bs.at("num_classes").get<int>()};
    const auto& tm = header.at("training_meta");
    ckpt.meta.epoch = tm.at("epoch").get<int>();
    ckpt.meta.val_mae = tm.at("val_mae").is_null() ? std::numeric_limits<double>::quiet_NaN() : tm.at("val_mae").get<double>();
    ckpt.meta.seed = tm.at("seed").get<std::uint64_t>();

    ckpt.params = ModelParams::zeros(shape, ckpt.codec, ckpt.model);
    auto views = ckpt.params.views();
    const auto& arrays = header.at("arrays");
    if (arrays.size() != views.size()) throw IoError(path.string() + ": array table does not match the model layout");
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto& a = arrays[i];
      if (a.at("name").get<std::string>() != views[i].name || a.at("rows").get<Eigen::Index>() != views[i].rows ||
          a.at("cols").get<Eigen::Index>() != views[i].cols) {
        throw IoError(path.string() + ": unexpected array " + a.at("name").get<std::string>());
      }
      in.read(reinterpret_cast<char*>(views[i].data), static_cast<std::streamsize>(views[i].size() * sizeof(double)));
      if (!in) throw IoError(path.string() + ": truncated array " + views[i].name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  ckpt.validate();
  return ckpt;
}

ForwardPass model_forward(const Tensor& low, const Tensor& high, const Tensor& masks, const ModelParams& params,
                          const FpaOptions& options) {
  ForwardPass pass;
  pass.fpa = fpa_forward(high, masks, params.fpa, options);
  pass.head = head_forward(low, pass.fpa.output, params.head);
  return pass;
}

void model_backward(const Tensor& high, const ForwardPass& pass, const ModelParams& params, const FpaOptions& options,
                    const Matrix& grad_logits, ModelParams& grads) {
  const Tensor grad_v = head_backward(pass.head, params.head, grad_logits, grads.head);
  fpa_backward(high, params.fpa, pass.fpa, options, grad_v, grads.fpa);
}

FeatureBundle stack_bundles(const std::vector<const FeatureBundle*>& bundles) {
  const int n = static_cast<int>(bundles.size());
  std::vector<const Tensor*> low(n), high(n), masks(n);
  for (int i = 0; i < n; ++i) {
    low[i] = &bundles[i]->low;
    high[i] = &bundles[i]->high;
    masks[i] = &bundles[i]->masks;
  }
  return FeatureBundle{stack(low.data(), n), stack(high.data(), n), stack(masks.data(), n)};
}

AgeEstimator::AgeEstimator(ModelCheckpoint checkpoint, std::shared_ptr<const Backbone> backbone)
    : checkpoint_(std::move(checkpoint)), backbone_(std::move(backbone)) {
  if (!backbone_) throw InvalidArgument("AgeEstimator: null backbone");
  checkpoint_.validate_against(*backbone_);
}

Prediction AgeEstimator::predict(const Image& image, const BoundingBox& bbox, bool flip_tta) const {
  return run_predict(checkpoint_, *backbone_, image, bbox, flip_tta);
}

std::vector<Prediction> AgeEstimator::predict_bundles(const std::vector<const FeatureBundle*>& bundles) const {
  if (bundles.empty()) return {};
  const FeatureBundle batch = stack_bundles(bundles);
  const ForwardPass pass = model_forward(batch.low, batch.high, batch.masks, checkpoint_.params, checkpoint_.fpa_options());
  std::vector<Prediction> out(bundles.size());
  for (int n = 0; n < batch.low.batch; ++n) {
    out[n].dist = pass.head.distribution(n);
    out[n].attention = pass.fpa.attention.col(n);
    out[n].age = decode_expectation(out[n].dist);
  }
  return out;
}

Prediction predict_age(const Image& image, const BoundingBox& bbox, const ModelCheckpoint& checkpoint,
                       const Backbone& backbone, bool flip_tta) {
  checkpoint.validate_against(backbone);
  return run_predict(checkpoint, backbone, image, bbox, flip_tta);
}

}  // namespace fpage
