#pragma once

#include "fpage/tensor.hpp"

#include <random>

// Minimal layer kit used by the FPA block and the age head. Every backward
// function accumulates (+=) into parameter gradients and overwrites input gradients.
namespace fpage::nn {

// out = w * in + b (per pixel).
void conv1x1_forward(const Tensor& in, const Matrix& w, const Vector& b, Tensor& out);
void conv1x1_backward(const Tensor& in, const Matrix& w, const Tensor& grad_out, Matrix& grad_w, Vector& grad_b,
                      Tensor* grad_in);

// 3x3, stride 1, zero padding 1. Weights are Cout x (9 * Cin), tap-major:
// column block t = (dy + 1) * 3 + (dx + 1) multiplies input pixel (i + dy, j + dx).
Matrix im2col3x3(const Tensor& in);
void col2im3x3(const Matrix& cols, Tensor& grad_in);
void conv3x3_forward(const Tensor& in, const Matrix& w, const Vector& b, Tensor& out, Matrix& cols);
void conv3x3_backward(const Matrix& cols, const Matrix& w, const Tensor& grad_out, Matrix& grad_w, Vector& grad_b,
                      Tensor& grad_in);

struct GroupNormCache {
  Matrix normalized;  // x_hat, same shape as input data
  Matrix inv_std;     // groups x batch
};

inline constexpr double kGroupNormEps = 1e-5;

// Per-sample group normalization with a learned per-channel affine.
void group_norm_forward(const Tensor& in, int groups, const Vector& gamma, const Vector& beta, Tensor& out,
                        GroupNormCache& cache);
void group_norm_backward(const Tensor& grad_out, int groups, const Vector& gamma, const GroupNormCache& cache,
                         Vector& grad_gamma, Vector& grad_beta, Tensor& grad_in);

// channels x batch
Matrix global_avg_pool(const Tensor& in);
// Spreads grad_pooled (channels x batch) uniformly over each sample's pixels.
void global_avg_pool_backward(const Matrix& grad_pooled, Tensor& grad_in);

// Column-wise numerically stable softmax.
Matrix softmax_columns(const Matrix& logits);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void fan_in_uniform(Matrix& w, int fan_in, std::mt19937_64& rng);

}  // namespace fpage::nn
