#pragma once

#include "fpage/tensor.hpp"

#include <optional>
#include <random>

namespace fpage {

struct FpaDims {
  int high_channels = 512;
  int num_classes = 11;
  int hidden = 0;  // attention bottleneck width; 0 means 2 * num_classes

  int group_width() const { return high_channels / num_classes; }
  int grouped_channels() const { return group_width() * num_classes; }
  int hidden_width() const { return hidden > 0 ? hidden : 2 * num_classes; }
  void validate() const;
  bool operator==(const FpaDims&) const = default;
};

// Trainable parameters of the Face Parsing Attention block.
//
// group_w maps the high-level features to C contiguous groups of
// floor(high_channels / C) channels. With block_diagonal set, output group k
// only reads input channels [k * Cin / C, (k + 1) * Cin / C), which is the
// same as C independent per-group 1x1 convolutions.
struct FpaParams {
  FpaDims dims;
  bool block_diagonal = false;
  Matrix group_w;  // grouped_channels x high_channels
  Vector group_b;
  Matrix fc1_w;    // hidden x grouped_channels
  Vector fc1_b;
  Matrix fc2_w;    // num_classes x hidden
  Vector fc2_b;

  static FpaParams zeros(const FpaDims& dims, bool block_diagonal = false);
  static FpaParams random(const FpaDims& dims, std::mt19937_64& rng, bool block_diagonal = false);

  // 1 where group_w may be non-zero.
  Matrix block_mask() const;
  void validate() const;
};

struct FpaOptions {
  // Gate with the one-hot argmax of the masks instead of the soft probabilities.
  bool hard_masks = false;
  // Bypass the attention branch and use these weights (length C) for every sample.
  std::optional<Vector> fixed_attention;
};

struct FpaActivations {
  Tensor grouped;     // U
  Tensor gate;        // mask values actually used for gating (soft or one-hot)
  Tensor gated;       // U_hat = gate_k * U_k
  Matrix pooled;      // spatial mean of U_hat, grouped_channels x batch
  Matrix hidden_pre;  // fc1 output before ReLU, hidden x batch
  Matrix attention;   // a, num_classes x batch, each entry in (0, 1)
  Tensor output;      // V_k = a_k * U_hat_k
};

// high: (n, h, w, high_channels); masks: (n, h, w, C). Masks are not required to
// be normalized here; the bundle invariant is checked where features are produced.
FpaActivations fpa_forward(const Tensor& high, const Tensor& masks, const FpaParams& params,
                           const FpaOptions& options = {});

// Accumulates parameter gradients for dLoss/dV = grad_output.
void fpa_backward(const Tensor& high, const FpaParams& params, const FpaActivations& acts, const FpaOptions& options,
                  const Tensor& grad_output, FpaParams& grads);

}  // namespace fpage
