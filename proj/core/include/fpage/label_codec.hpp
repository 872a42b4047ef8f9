#pragma once

#include <span>
#include <vector>

namespace fpage {

// Age bins are the integers 0..num_classes-1.
struct LabelCodecConfig {
  int num_classes = 101;
  double sigma = 2.0;

  void validate() const;
  bool operator==(const LabelCodecConfig&) const = default;
};

// Probability vector over the age bins.
struct AgeDistribution {
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
  double sum() const;
  // Throws InvalidArgument on negative/non-finite entries or |sum - 1| > tolerance.
  void validate(double tolerance) const;
};

// Discretized Gaussian centred at `age`, evaluated on the integer grid and
// renormalized to sum to one.
AgeDistribution encode_label(int age, const LabelCodecConfig& cfg);

// Expected age sum_k k * p_k. Rejects inputs whose mass deviates from 1 by more than 1e-4.
double decode_expectation(const AgeDistribution& dist);

// Element-wise mean of two distributions of equal size.
AgeDistribution average(const AgeDistribution& a, const AgeDistribution& b);

// Manifest ages may be fractional; the label set is integral.
int round_age(double age);

}  // namespace fpage
