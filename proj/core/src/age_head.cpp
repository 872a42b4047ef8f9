#include "fpage/age_head.hpp"

#include "fpage/errors.hpp"

#include <string>

namespace fpage {

namespace {

Tensor relu(const Tensor& x) {
  Tensor y = x;
  y.data = y.data.cwiseMax(0.0);
  return y;
}

void relu_backward_inplace(const Tensor& pre, Tensor& grad) {
  grad.data.array() *= (pre.data.array() > 0.0).cast<double>();
}

}  // namespace

void HeadDims::validate() const {
  if (low_channels < 1 || fpa_channels < 1 || trunk_channels < 1 || age_bins < 2) {
    throw InvalidArgument("head: channel counts must be positive and age_bins >= 2");
  }
  if (norm_groups < 1 || trunk_channels % norm_groups != 0) {
    throw InvalidArgument("head: trunk_channels " + std::to_string(trunk_channels) + " not divisible by norm_groups " +
                          std::to_string(norm_groups));
  }
}

AgeHeadParams AgeHeadParams::zeros(const HeadDims& dims) {
  dims.validate();
  AgeHeadParams p;
  p.dims = dims;
  const int t = dims.trunk_channels;
  p.fuse_w = Matrix::Zero(t, dims.low_channels + dims.fpa_channels);
  p.fuse_b = Vector::Zero(t);
  for (auto& b : p.blocks) {
    b.norm1_gamma = Vector::Ones(t);
    b.norm1_beta = Vector::Zero(t);
    b.conv1_w = Matrix::Zero(t, 9 * t);
    b.conv1_b = Vector::Zero(t);
    b.norm2_gamma = Vector::Ones(t);
    b.norm2_beta = Vector::Zero(t);
    b.conv2_w = Matrix::Zero(t, 9 * t);
    b.conv2_b = Vector::Zero(t);
  }
  p.fc_w = Matrix::Zero(dims.age_bins, t);
  p.fc_b = Vector::Zero(dims.age_bins);
  return p;
}

AgeHeadParams AgeHeadParams::random(const HeadDims& dims, std::mt19937_64& rng) {
  AgeHeadParams p = zeros(dims);
  nn::fan_in_uniform(p.fuse_w, dims.low_channels + dims.fpa_channels, rng);
  for (auto& b : p.blocks) {
    nn::fan_in_uniform(b.conv1_w, 9 * dims.trunk_channels, rng);
    nn::fan_in_uniform(b.conv2_w, 9 * dims.trunk_channels, rng);
  }
  nn::fan_in_uniform(p.fc_w, dims.trunk_channels, rng);
  return p;
}

void AgeHeadParams::validate() const {
  dims.validate();
  const int t = dims.trunk_channels;
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("head params: bad shape for " + what);
  };
  check(fuse_w.rows() == t && fuse_w.cols() == dims.low_channels + dims.fpa_channels, "fuse_w");
  check(fuse_b.size() == t, "fuse_b");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string id = "block " + std::to_string(i);
    check(b.norm1_gamma.size() == t && b.norm1_beta.size() == t, id + " norm1");
    check(b.norm2_gamma.size() == t && b.norm2_beta.size() == t, id + " norm2");
    check(b.conv1_w.rows() == t && b.conv1_w.cols() == 9 * t && b.conv1_b.size() == t, id + " conv1");
    check(b.conv2_w.rows() == t && b.conv2_w.cols() == 9 * t && b.conv2_b.size() == t, id + " conv2");
  }
  check(fc_w.rows() == dims.age_bins && fc_w.cols() == t, "fc_w");
  check(fc_b.size() == dims.age_bins, "fc_b");
}

AgeDistribution HeadActivations::distribution(int n) const {
  AgeDistribution d;
  d.probs.assign(probs.col(n).data(), probs.col(n).data() + probs.rows());
  return d;
}

HeadActivations head_forward(const Tensor& low, const Tensor& fpa_out, const AgeHeadParams& params) {
  const HeadDims& d = params.dims;
  if (!low.same_grid(fpa_out) || low.channels() != d.low_channels || fpa_out.channels() != d.fpa_channels) {
    throw InvalidArgument("head_forward: expected low (h, w, " + std::to_string(d.low_channels) + ") and V (h, w, " +
                          std::to_string(d.fpa_channels) + "), got " + low.shape_string() + " and " +
                          fpa_out.shape_string());
  }
  HeadActivations a;
  a.concat = Tensor(low.batch, low.height, low.width, d.low_channels + d.fpa_channels);
  a.concat.data.topRows(d.low_channels) = low.data;
  a.concat.data.bottomRows(d.fpa_channels) = fpa_out.data;
  nn::conv1x1_forward(a.concat, params.fuse_w, params.fuse_b, a.fused);

  Tensor x = a.fused;
  for (int i = 0; i < kNumResidualBlocks; ++i) {
    const auto& bp = params.blocks[i];
    auto& ba = a.blocks[i];
    ba.input = x;
    nn::group_norm_forward(x, d.norm_groups, bp.norm1_gamma, bp.norm1_beta, ba.norm1_out, ba.norm1);
    nn::conv3x3_forward(relu(ba.norm1_out), bp.conv1_w, bp.conv1_b, ba.conv1_out, ba.cols1);
    nn::group_norm_forward(ba.conv1_out, d.norm_groups, bp.norm2_gamma, bp.norm2_beta, ba.norm2_out, ba.norm2);
    Tensor conv2_out;
    nn::conv3x3_forward(relu(ba.norm2_out), bp.conv2_w, bp.conv2_b, conv2_out, ba.cols2);
    x.data += conv2_out.data;
  }
  a.trunk = std::move(x);
  a.pooled = nn::global_avg_pool(a.trunk);
  a.logits = params.fc_w * a.pooled;
  a.logits.colwise() += params.fc_b;
  a.probs = nn::softmax_columns(a.logits);
  return a;
}

Tensor head_backward(const HeadActivations& acts, const AgeHeadParams& params, const Matrix& grad_logits,
                     AgeHeadParams& grads) {
  const HeadDims& d = params.dims;
  grads.fc_w.noalias() += grad_logits * acts.pooled.transpose();
  grads.fc_b += grad_logits.rowwise().sum();
  const Matrix grad_pooled = params.fc_w.transpose() * grad_logits;

  Tensor grad_x(acts.trunk.batch, acts.trunk.height, acts.trunk.width, d.trunk_channels);
  nn::global_avg_pool_backward(grad_pooled, grad_x);

  for (int i = kNumResidualBlocks - 1; i >= 0; --i) {
    const auto& bp = params.blocks[i];
    const auto& ba = acts.blocks[i];
    auto& bg = grads.blocks[i];
    // Residual branch; the skip path passes grad_x through unchanged.
    Tensor grad_branch;
    nn::conv3x3_backward(ba.cols2, bp.conv2_w, grad_x, bg.conv2_w, bg.conv2_b, grad_branch);
    relu_backward_inplace(ba.norm2_out, grad_branch);
    Tensor grad_conv1;
    nn::group_norm_backward(grad_branch, d.norm_groups, bp.norm2_gamma, ba.norm2, bg.norm2_gamma, bg.norm2_beta, grad_conv1);
    Tensor grad_relu1;
    nn::conv3x3_backward(ba.cols1, bp.conv1_w, grad_conv1, bg.conv1_w, bg.conv1_b, grad_relu1);
    relu_backward_inplace(ba.norm1_out, grad_relu1);
    Tensor grad_in;
    nn::group_norm_backward(grad_relu1, d.norm_groups, bp.norm1_gamma, ba.norm1, bg.norm1_gamma, bg.norm1_beta, grad_in);
    grad_x.data += grad_in.data;
  }

  Tensor grad_concat;
  nn::conv1x1_backward(acts.concat, params.fuse_w, grad_x, grads.fuse_w, grads.fuse_b, &grad_concat);
  Tensor grad_v(grad_concat.batch, grad_concat.height, grad_concat.width, d.fpa_channels);
  grad_v.data = grad_concat.data.bottomRows(d.fpa_channels);
  return grad_v;
}

}  // namespace fpage
