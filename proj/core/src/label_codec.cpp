#include "fpage/label_codec.hpp"

#include "fpage/errors.hpp"

#include <cmath>
#include <string>

namespace fpage {

void LabelCodecConfig::validate() const {
  if (num_classes < 2) throw InvalidArgument("label codec: num_classes must be >= 2, got " + std::to_string(num_classes));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("label codec: sigma must be > 0, got " + std::to_string(sigma));
}

double AgeDistribution::sum() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

void AgeDistribution::validate(double tolerance) const {
  if (probs.empty()) throw InvalidArgument("age distribution is empty");
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (!std::isfinite(probs[k]) || probs[k] < 0.0) {
      throw InvalidArgument("age distribution entry " + std::to_string(k) + " is " + std::to_string(probs[k]));
    }
  }
  const double s = sum();
  if (std::abs(s - 1.0) > tolerance) {
    throw InvalidArgument("age distribution sums to " + std::to_string(s) + ", not 1");
  }
}

AgeDistribution encode_label(int age, const LabelCodecConfig& cfg) {
  cfg.validate();
  if (age < 0 || age > cfg.num_classes - 1) {
    throw InvalidArgument("age label " + std::to_string(age) + " outside [0, " + std::to_string(cfg.num_classes - 1) + "]");
  }
  AgeDistribution dist;
  dist.probs.resize(cfg.num_classes);
  const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  double z = 0.0;
  for (int k = 0; k < cfg.num_classes; ++k) {
    const double d = static_cast<double>(k - age);
    dist.probs[k] = std::exp(-d * d * inv_two_var);
    z += dist.probs[k];
  }
  for (double& p : dist.probs) p /= z;
  return dist;
}

double decode_expectation(const AgeDistribution& dist) {
  dist.validate(1e-4);
  double age = 0.0;
  for (int k = 0; k < dist.size(); ++k) age += k * dist.probs[k];
  return age;
}

AgeDistribution average(const AgeDistribution& a, const AgeDistribution& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("cannot average distributions of sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  AgeDistribution out;
  out.probs.resize(a.probs.size());
  for (std::size_t k = 0; k < a.probs.size(); ++k) out.probs[k] = 0.5 * (a.probs[k] + b.probs[k]);
  return out;
}

int round_age(double age) {
  if (!std::isfinite(age)) throw InvalidArgument("age is not finite");
  return static_cast<int>(std::lround(age));
}

}  // namespace fpage
