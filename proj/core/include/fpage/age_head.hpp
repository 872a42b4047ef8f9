#pragma once

#include "fpage/label_codec.hpp"
#include "fpage/nn.hpp"
#include "fpage/tensor.hpp"

#include <array>
#include <random>

namespace fpage {

inline constexpr int kNumResidualBlocks = 4;

struct HeadDims {
  int low_channels = 256;
  int fpa_channels = 506;  // C * floor(512 / C)
  int trunk_channels = 256;
  int norm_groups = 32;
  int age_bins = 101;

  void validate() const;
  bool operator==(const HeadDims&) const = default;
};

// Pre-activation residual block: x + conv2(relu(gn2(conv1(relu(gn1(x)))))).
struct ResidualBlockParams {
  Vector norm1_gamma, norm1_beta;
  Matrix conv1_w;  // trunk x 9 * trunk
  Vector conv1_b;
  Vector norm2_gamma, norm2_beta;
  Matrix conv2_w;
  Vector conv2_b;
};

struct AgeHeadParams {
  HeadDims dims;
  Matrix fuse_w;  // trunk x (low + fpa)
  Vector fuse_b;
  std::array<ResidualBlockParams, kNumResidualBlocks> blocks;
  Matrix fc_w;  // age_bins x trunk
  Vector fc_b;

  // All weights and biases zero, normalization gamma = 1.
  static AgeHeadParams zeros(const HeadDims& dims);
  static AgeHeadParams random(const HeadDims& dims, std::mt19937_64& rng);
  void validate() const;
};

struct ResidualBlockActivations {
  Tensor input;
  nn::GroupNormCache norm1;
  Tensor norm1_out;
  Matrix cols1;
  Tensor conv1_out;
  nn::GroupNormCache norm2;
  Tensor norm2_out;
  Matrix cols2;
};

struct HeadActivations {
  Tensor concat;  // [L; V]
  Tensor fused;
  std::array<ResidualBlockActivations, kNumResidualBlocks> blocks;
  Tensor trunk;
  Matrix pooled;  // trunk x batch
  Matrix logits;  // age_bins x batch
  Matrix probs;   // softmax(logits)

  AgeDistribution distribution(int n) const;
};

// low: (n, h, w, low_channels); fpa_out: (n, h, w, fpa_channels).
HeadActivations head_forward(const Tensor& low, const Tensor& fpa_out, const AgeHeadParams& params);

// Accumulates parameter gradients for dLoss/dlogits and returns dLoss/dV.
Tensor head_backward(const HeadActivations& acts, const AgeHeadParams& params, const Matrix& grad_logits,
                     AgeHeadParams& grads);

}  // namespace fpage
