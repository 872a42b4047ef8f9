#include "fpage/training.hpp"

#include "fpage/errors.hpp"
#include "fpage/jsonl.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <numbers>
#include <sstream>

namespace fpage {

// ---------------------------------------------------------------- loss

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("loss: lambda must be >= 0");
}

LossValue loss(const AgeDistribution& pred, const AgeDistribution& target, int age, const LossConfig& cfg) {
  cfg.validate();
  if (pred.size() != target.size()) throw InvalidArgument("loss: prediction and target sizes differ");
  LossValue v;
  for (int k = 0; k < pred.size(); ++k) {
    const double q = target.probs[k];
    if (q <= 0.0) continue;
    const double p = pred.probs[k];
    if (!(p > 0.0)) {
      throw NumericalFault("loss: predicted probability at bin " + std::to_string(k) + " is zero where the target is " +
                           std::to_string(q));
    }
    v.kl += q * (std::log(q) - std::log(p));
  }
  v.l1 = std::abs(decode_expectation(pred) - age);
  v.total = v.kl + cfg.lambda * v.l1;
  return v;
}

Vector loss_logit_gradient(const AgeDistribution& pred, const AgeDistribution& target, int age, const LossConfig& cfg) {
  const int k = pred.size();
  Vector g(k);
  double yhat = 0.0;
  for (int i = 0; i < k; ++i) yhat += i * pred.probs[i];
  const double diff = yhat - age;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  for (int i = 0; i < k; ++i) {
    g[i] = pred.probs[i] - target.probs[i] + cfg.lambda * sign * pred.probs[i] * (i - yhat);
  }
  return g;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("train config: " + msg); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (lr_start < 0.0 || lr_peak < 0.0) fail("learning rates must be >= 0");
  if (lr_start > lr_peak) fail("lr_start must not exceed lr_peak");
  if (warmup_epochs < 0) fail("warmup_epochs must be >= 0");
  if (!(decay_gamma > 0.0 && decay_gamma < 1.0)) fail("decay_gamma must be in (0, 1)");
  if (patience < 1) fail("patience must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  codec.validate();
}

namespace {

using Setter = std::function<void(TrainConfig&, const std::string&)>;

template <typename T>
T parse_value(const std::string& s) {
  std::istringstream is(s);
  T v{};
  is >> v;
  if (!is || !is.eof()) throw InvalidArgument("cannot parse '" + s + "'");
  return v;
}

template <>
bool parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidArgument("cannot parse boolean '" + s + "'");
}

template <typename T, typename Field>
Setter setter(Field field) {
  return [field](TrainConfig& c, const std::string& s) { field(c) = parse_value<T>(s); };
}

const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> s = {
      {"batch_size", setter<int>([](TrainConfig& c) -> int& { return c.batch_size; })},
      {"weight_decay", setter<double>([](TrainConfig& c) -> double& { return c.weight_decay; })},
      {"momentum", setter<double>([](TrainConfig& c) -> double& { return c.momentum; })},
      {"lr_start", setter<double>([](TrainConfig& c) -> double& { return c.lr_start; })},
      {"lr_peak", setter<double>([](TrainConfig& c) -> double& { return c.lr_peak; })},
      {"warmup_epochs", setter<int>([](TrainConfig& c) -> int& { return c.warmup_epochs; })},
      {"decay_gamma", setter<double>([](TrainConfig& c) -> double& { return c.decay_gamma; })},
      {"patience", setter<int>([](TrainConfig& c) -> int& { return c.patience; })},
      {"max_epochs", setter<int>([](TrainConfig& c) -> int& { return c.max_epochs; })},
      {"seed", setter<std::uint64_t>([](TrainConfig& c) -> std::uint64_t& { return c.seed; })},
      {"val_flip_tta", setter<bool>([](TrainConfig& c) -> bool& { return c.val_flip_tta; })},
      {"augment.hflip", setter<bool>([](TrainConfig& c) -> bool& { return c.augment.hflip; })},
      {"augment.scale", setter<bool>([](TrainConfig& c) -> bool& { return c.augment.scale; })},
      {"augment.rotation", setter<bool>([](TrainConfig& c) -> bool& { return c.augment.rotation; })},
      {"augment.translation", setter<bool>([](TrainConfig& c) -> bool& { return c.augment.translation; })},
      {"augment.bbox_jitter", setter<bool>([](TrainConfig& c) -> bool& { return c.augment.bbox_jitter; })},
      {"augment.scale_range", setter<double>([](TrainConfig& c) -> double& { return c.augment.scale_range; })},
      {"augment.rotation_degrees", setter<double>([](TrainConfig& c) -> double& { return c.augment.rotation_degrees; })},
      {"augment.translation_range", setter<double>([](TrainConfig& c) -> double& { return c.augment.translation_range; })},
      {"augment.jitter_range", setter<double>([](TrainConfig& c) -> double& { return c.augment.jitter_range; })},
      {"model.trunk_channels", setter<int>([](TrainConfig& c) -> int& { return c.model.trunk_channels; })},
      {"model.norm_groups", setter<int>([](TrainConfig& c) -> int& { return c.model.norm_groups; })},
      {"model.attention_hidden", setter<int>([](TrainConfig& c) -> int& { return c.model.attention_hidden; })},
      {"model.block_diagonal_groups", setter<bool>([](TrainConfig& c) -> bool& { return c.model.block_diagonal_groups; })},
      {"model.hard_masks", setter<bool>([](TrainConfig& c) -> bool& { return c.model.hard_masks; })},
      {"codec.num_classes", setter<int>([](TrainConfig& c) -> int& { return c.codec.num_classes; })},
      {"codec.sigma", setter<double>([](TrainConfig& c) -> double& { return c.codec.sigma; })},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("train config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = config_setters().find(key);
    if (it == config_setters().end()) {
      throw InvalidArgument("train config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    try {
      it->second(cfg, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("train config line " + std::to_string(number) + " (" + key + "): " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(read_text_file(path)); }

std::string to_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << std::boolalpha;
  os << "batch_size = " << c.batch_size << "\n"
     << "weight_decay = " << c.weight_decay << "\n"
     << "momentum = " << c.momentum << "\n"
     << "lr_start = " << c.lr_start << "\n"
     << "lr_peak = " << c.lr_peak << "\n"
     << "warmup_epochs = " << c.warmup_epochs << "\n"
     << "decay_gamma = " << c.decay_gamma << "\n"
     << "patience = " << c.patience << "\n"
     << "max_epochs = " << c.max_epochs << "\n"
     << "seed = " << c.seed << "\n"
     << "val_flip_tta = " << c.val_flip_tta << "\n"
     << "augment.hflip = " << c.augment.hflip << "\n"
     << "augment.scale = " << c.augment.scale << "\n"
     << "augment.rotation = " << c.augment.rotation << "\n"
     << "augment.translation = " << c.augment.translation << "\n"
     << "augment.bbox_jitter = " << c.augment.bbox_jitter << "\n"
     << "augment.scale_range = " << c.augment.scale_range << "\n"
     << "augment.rotation_degrees = " << c.augment.rotation_degrees << "\n"
     << "augment.translation_range = " << c.augment.translation_range << "\n"
     << "augment.jitter_range = " << c.augment.jitter_range << "\n"
     << "model.trunk_channels = " << c.model.trunk_channels << "\n"
     << "model.norm_groups = " << c.model.norm_groups << "\n"
     << "model.attention_hidden = " << c.model.attention_hidden << "\n"
     << "model.block_diagonal_groups = " << c.model.block_diagonal_groups << "\n"
     << "model.hard_masks = " << c.model.hard_masks << "\n"
     << "codec.num_classes = " << c.codec.num_classes << "\n"
     << "codec.sigma = " << c.codec.sigma << "\n";
  return os.str();
}

double lr_at(double epoch, const TrainConfig& cfg) {
  if (epoch < 0.0) throw InvalidArgument("lr_at: negative epoch");
  if (epoch <= cfg.warmup_epochs) {
    if (cfg.warmup_epochs == 0) return cfg.lr_peak;
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * (epoch / cfg.warmup_epochs);
  }
  return cfg.lr_peak * std::pow(cfg.decay_gamma, epoch - cfg.warmup_epochs);
}

// ---------------------------------------------------------------- augmentation

Image augment_example(const Image& image, BoundingBox& bbox, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Image out = image;
  if (cfg.hflip && coin(rng)) {
    out = out.mirrored();
    bbox = bbox.mirrored(out.width);
  }
  if (cfg.geometric()) {
    const double s = cfg.scale ? 1.0 + cfg.scale_range * unit(rng) : 1.0;
    const double angle = cfg.rotation ? cfg.rotation_degrees * unit(rng) : 0.0;
    const double tx = cfg.translation ? cfg.translation_range * out.width * unit(rng) : 0.0;
    const double ty = cfg.translation ? cfg.translation_range * out.height * unit(rng) : 0.0;
    cv::Mat m = cv::getRotationMatrix2D(cv::Point2f(out.width / 2.0f, out.height / 2.0f), angle, s);
    m.at<double>(0, 2) += tx;
    m.at<double>(1, 2) += ty;
    cv::Mat src(out.height, out.width, CV_32FC3, out.pixels.data());
    cv::Mat dst;
    cv::warpAffine(src, dst, m, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    std::copy(dst.ptr<float>(), dst.ptr<float>() + out.pixels.size(), out.pixels.begin());

    const double xs[4] = {bbox.x_min, bbox.x_max, bbox.x_min, bbox.x_max};
    const double ys[4] = {bbox.y_min, bbox.y_min, bbox.y_max, bbox.y_max};
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (int i = 0; i < 4; ++i) {
      const double x = m.at<double>(0, 0) * xs[i] + m.at<double>(0, 1) * ys[i] + m.at<double>(0, 2);
      const double y = m.at<double>(1, 0) * xs[i] + m.at<double>(1, 1) * ys[i] + m.at<double>(1, 2);
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    bbox = BoundingBox{x0, y0, x1, y1};
  }
  if (cfg.bbox_jitter) {
    const double bw = bbox.x_max - bbox.x_min;
    const double bh = bbox.y_max - bbox.y_min;
    BoundingBox j{bbox.x_min + cfg.jitter_range * bw * unit(rng), bbox.y_min + cfg.jitter_range * bh * unit(rng),
                  bbox.x_max + cfg.jitter_range * bw * unit(rng), bbox.y_max + cfg.jitter_range * bh * unit(rng)};
    if (j.well_formed()) bbox = j;
  }
  // Keep the box inside the frame so the backbone contract holds.
  bbox.x_min = std::clamp(bbox.x_min, 0.0, out.width - 1.0);
  bbox.y_min = std::clamp(bbox.y_min, 0.0, out.height - 1.0);
  bbox.x_max = std::clamp(bbox.x_max, bbox.x_min + 1.0, static_cast<double>(out.width));
  bbox.y_max = std::clamp(bbox.y_max, bbox.y_min + 1.0, static_cast<double>(out.height));
  return out;
}

std::vector<TrainingExample> load_examples(const std::vector<DatasetRecord>& records) {
  std::vector<TrainingExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(TrainingExample{load_image(r.image_path), r.bbox, r.age, r.image_path});
  return out;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"lr", lr}, {"train_loss", train_loss}, {"val_mae", val_mae}, {"wall_seconds", wall_seconds}};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

// ---------------------------------------------------------------- training loop

double validation_mae(const AgeEstimator& estimator, const std::vector<TrainingExample>& examples, bool flip_tta) {
  if (examples.empty()) throw InvalidArgument("validation set is empty");
  double sum = 0.0;
  for (const auto& ex : examples) sum += std::abs(estimator.predict(ex.image, ex.bbox, flip_tta).age - ex.age);
  return sum / examples.size();
}

namespace {

constexpr int kEvalChunk = 64;

double bundle_mae(const ModelCheckpoint& ckpt, const std::vector<FeatureBundle>& bundles,
                  const std::vector<TrainingExample>& examples) {
  double sum = 0.0;
  const FpaOptions opts = ckpt.fpa_options();
  for (std::size_t start = 0; start < bundles.size(); start += kEvalChunk) {
    const std::size_t end = std::min(bundles.size(), start + kEvalChunk);
    std::vector<const FeatureBundle*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&bundles[i]);
    const FeatureBundle batch = stack_bundles(chunk);
    const ForwardPass pass = model_forward(batch.low, batch.high, batch.masks, ckpt.params, opts);
    for (std::size_t i = start; i < end; ++i) {
      sum += std::abs(decode_expectation(pass.head.distribution(static_cast<int>(i - start))) - examples[i].age);
    }
  }
  return sum / static_cast<double>(bundles.size());
}

}  // namespace

TrainResult train(const std::vector<TrainingExample>& train_set, const std::vector<TrainingExample>& val_set,
                  std::shared_ptr<const Backbone> backbone, const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  loss_cfg.validate();
  if (train_set.empty()) throw InvalidArgument("train: training set is empty");
  if (val_set.empty()) throw InvalidArgument("train: validation set is empty");
  if (!backbone) throw InvalidArgument("train: null backbone");
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& ex : *set) {
      if (ex.age < 0 || ex.age >= cfg.codec.num_classes) {
        throw InvalidArgument("train: age " + std::to_string(ex.age) + " of " + ex.image_path + " outside the codec range");
      }
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 init_rng(mix_seed(cfg.seed, 0x1417));
  ModelCheckpoint ckpt;
  ckpt.model = cfg.model;
  ckpt.codec = cfg.codec;
  ckpt.class_names = backbone->class_names();
  ckpt.backbone = backbone->description();
  ckpt.meta.seed = cfg.seed;
  ckpt.params = ModelParams::random(backbone->shape(), cfg.codec, cfg.model, init_rng);
  ckpt.validate_against(*backbone);
  const FpaOptions fpa_opts = ckpt.fpa_options();

  std::vector<AgeDistribution> targets(cfg.codec.num_classes);
  for (int y = 0; y < cfg.codec.num_classes; ++y) targets[y] = encode_label(y, cfg.codec);

  std::vector<FeatureBundle> val_bundles;
  if (!cfg.val_flip_tta) {
    val_bundles.reserve(val_set.size());
    for (const auto& ex : val_set) val_bundles.push_back(backbone->extract(ex.image, ex.bbox));
  }

  // Without geometric or jitter augmentation the only variants are the image
  // and its mirror, so both can be extracted once up front.
  const bool cache_train = !cfg.augment.geometric() && !cfg.augment.bbox_jitter;
  std::vector<FeatureBundle> cached, cached_mirror;
  if (cache_train) {
    cached.reserve(train_set.size());
    for (const auto& ex : train_set) {
      cached.push_back(backbone->extract(ex.image, ex.bbox));
      if (cfg.augment.hflip) cached_mirror.push_back(backbone->extract(ex.image.mirrored(), ex.bbox.mirrored(ex.image.width)));
    }
  }

  ModelParams velocity = ckpt.params.zeros_like();
  ModelParams grads = ckpt.params.zeros_like();
  auto param_views = ckpt.params.views();
  auto grad_views = grads.views();
  auto vel_views = velocity.views();

  TrainResult result;
  ModelParams best_params = ckpt.params;
  double best_mae = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale = 0;

  const int n = static_cast<int>(train_set.size());
  const int num_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<int> order(n);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5348, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (int b = 0; b < num_batches; ++b) {
      const int begin = b * cfg.batch_size;
      const int end = std::min(n, begin + cfg.batch_size);
      std::vector<FeatureBundle> fresh;
      std::vector<const FeatureBundle*> batch;
      fresh.reserve(end - begin);
      for (int i = begin; i < end; ++i) {
        const int idx = order[i];
        std::mt19937_64 aug_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1, static_cast<std::uint64_t>(idx)));
        if (cache_train) {
          const bool flip = cfg.augment.hflip && std::bernoulli_distribution(0.5)(aug_rng);
          batch.push_back(flip ? &cached_mirror[idx] : &cached[idx]);
        } else {
          BoundingBox box = train_set[idx].bbox;
          const Image img = augment_example(train_set[idx].image, box, cfg.augment, aug_rng);
          fresh.push_back(backbone->extract(img, box));
          batch.push_back(&fresh.back());
        }
      }
      const FeatureBundle features = stack_bundles(batch);
      const ForwardPass pass = model_forward(features.low, features.high, features.masks, ckpt.params, fpa_opts);

      const int bn = end - begin;
      Matrix grad_logits(cfg.codec.num_classes, bn);
      double batch_loss = 0.0;
      for (int s = 0; s < bn; ++s) {
        const int age = train_set[order[begin + s]].age;
        const AgeDistribution p = pass.head.distribution(s);
        const LossValue lv = loss(p, targets[age], age, loss_cfg);
        batch_loss += lv.total;
        grad_logits.col(s) = loss_logit_gradient(p, targets[age], age, loss_cfg) / static_cast<double>(bn);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalFault("train: non-finite loss in epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b));
      }
      loss_sum += batch_loss;

      for (auto& g : grad_views) std::fill(g.data, g.data + g.size(), 0.0);
      model_backward(features.high, pass, ckpt.params, fpa_opts, grad_logits, grads);

      const double lr = lr_at(epoch + static_cast<double>(b) / num_batches, cfg);
      for (std::size_t v = 0; v < param_views.size(); ++v) {
        double* w = param_views[v].data;
        const double* g = grad_views[v].data;
        double* m = vel_views[v].data;
        const double wd = param_views[v].decays ? cfg.weight_decay : 0.0;
        for (Eigen::Index i = 0; i < param_views[v].size(); ++i) {
          m[i] = cfg.momentum * m[i] + g[i] + wd * w[i];
          w[i] -= lr * m[i];
        }
      }
    }

    double val_mae = 0.0;
    if (cfg.val_flip_tta) {
      val_mae = validation_mae(AgeEstimator(ckpt, backbone), val_set, true);
    } else {
      val_mae = bundle_mae(ckpt, val_bundles, val_set);
    }
    if (!std::isfinite(val_mae)) throw NumericalFault("train: non-finite validation MAE in epoch " + std::to_string(epoch + 1));

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr_at(epoch, cfg);
    log.train_loss = loss_sum / n;
    log.val_mae = val_mae;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);

    if (val_mae < best_mae) {
      best_mae = val_mae;
      best_epoch = epoch + 1;
      best_params = ckpt.params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  ckpt.params = std::move(best_params);
  ckpt.meta.epoch = best_epoch;
  ckpt.meta.val_mae = best_mae;
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace fpage
