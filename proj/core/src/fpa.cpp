#include "fpage/fpa.hpp"

#include "fpage/errors.hpp"
#include "fpage/nn.hpp"

#include <string>

namespace fpage {

void FpaDims::validate() const {
  if (num_classes < 1) throw InvalidArgument("fpa: num_classes must be positive");
  if (high_channels < num_classes) {
    throw InvalidArgument("fpa: " + std::to_string(high_channels) + " high-level channels cannot form " +
                          std::to_string(num_classes) + " groups");
  }
  if (hidden < 0) throw InvalidArgument("fpa: negative hidden width");
}

FpaParams FpaParams::zeros(const FpaDims& dims, bool block_diagonal) {
  dims.validate();
  FpaParams p;
  p.dims = dims;
  p.block_diagonal = block_diagonal;
  const int cg = dims.grouped_channels();
  const int hid = dims.hidden_width();
  p.group_w = Matrix::Zero(cg, dims.high_channels);
  p.group_b = Vector::Zero(cg);
  p.fc1_w = Matrix::Zero(hid, cg);
  p.fc1_b = Vector::Zero(hid);
  p.fc2_w = Matrix::Zero(dims.num_classes, hid);
  p.fc2_b = Vector::Zero(dims.num_classes);
  return p;
}

FpaParams FpaParams::random(const FpaDims& dims, std::mt19937_64& rng, bool block_diagonal) {
  FpaParams p = zeros(dims, block_diagonal);
  nn::fan_in_uniform(p.group_w, dims.high_channels, rng);
  if (block_diagonal) p.group_w.array() *= p.block_mask().array();
  std::normal_distribution<double> small(0.0, 0.01);
  for (Eigen::Index i = 0; i < p.fc1_w.size(); ++i) p.fc1_w.data()[i] = small(rng);
  for (Eigen::Index i = 0; i < p.fc2_w.size(); ++i) p.fc2_w.data()[i] = small(rng);
  return p;
}

Matrix FpaParams::block_mask() const {
  const int c = dims.num_classes;
  const int g = dims.group_width();
  const int cin = dims.high_channels;
  Matrix mask = Matrix::Zero(dims.grouped_channels(), cin);
  for (int k = 0; k < c; ++k) {
    const int lo = k * cin / c;
    const int hi = (k + 1) * cin / c;
    mask.block(static_cast<Eigen::Index>(k) * g, lo, g, hi - lo).setOnes();
  }
  return mask;
}

void FpaParams::validate() const {
  dims.validate();
  const int cg = dims.grouped_channels();
  const int hid = dims.hidden_width();
  auto check = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("fpa params: bad shape for ") + what);
  };
  check(group_w.rows() == cg && group_w.cols() == dims.high_channels, "group_w");
  check(group_b.size() == cg, "group_b");
  check(fc1_w.rows() == hid && fc1_w.cols() == cg, "fc1_w");
  check(fc1_b.size() == hid, "fc1_b");
  check(fc2_w.rows() == dims.num_classes && fc2_w.cols() == hid, "fc2_w");
  check(fc2_b.size() == dims.num_classes, "fc2_b");
}

FpaActivations fpa_forward(const Tensor& high, const Tensor& masks, const FpaParams& params, const FpaOptions& options) {
  const FpaDims& d = params.dims;
  if (high.channels() != d.high_channels || masks.channels() != d.num_classes || !high.same_grid(masks)) {
    throw InvalidArgument("fpa_forward: expected high (h, w, " + std::to_string(d.high_channels) + ") and masks (h, w, " +
                          std::to_string(d.num_classes) + "), got high " + high.shape_string() + " and masks " +
                          masks.shape_string());
  }
  const int c = d.num_classes;
  const int g = d.group_width();
  const int p = high.pixels();

  FpaActivations a;
  nn::conv1x1_forward(high, params.group_w, params.group_b, a.grouped);

  a.gate = masks;
  if (options.hard_masks) {
    a.gate.data.setZero();
    for (Eigen::Index col = 0; col < masks.data.cols(); ++col) {
      Eigen::Index k = 0;
      masks.data.col(col).maxCoeff(&k);
      a.gate.data(k, col) = 1.0;
    }
  }

  a.gated = a.grouped;
  for (int k = 0; k < c; ++k) {
    a.gated.data.middleRows(static_cast<Eigen::Index>(k) * g, g).array().rowwise() *= a.gate.data.row(k).array();
  }

  a.pooled = nn::global_avg_pool(a.gated);
  if (options.fixed_attention) {
    if (options.fixed_attention->size() != c) throw InvalidArgument("fpa_forward: fixed attention must have C entries");
    a.hidden_pre = Matrix::Zero(d.hidden_width(), high.batch);
    a.attention = options.fixed_attention->replicate(1, high.batch);
  } else {
    a.hidden_pre = params.fc1_w * a.pooled;
    a.hidden_pre.colwise() += params.fc1_b;
    Matrix z = params.fc2_w * a.hidden_pre.cwiseMax(0.0);
    z.colwise() += params.fc2_b;
    a.attention = (1.0 + (-z.array()).exp()).inverse().matrix();
  }

  a.output = a.gated;
  for (int n = 0; n < high.batch; ++n) {
    for (int k = 0; k < c; ++k) {
      a.output.data.block(static_cast<Eigen::Index>(k) * g, static_cast<Eigen::Index>(n) * p, g, p) *= a.attention(k, n);
    }
  }
  return a;
}

void fpa_backward(const Tensor& high, const FpaParams& params, const FpaActivations& acts, const FpaOptions& options,
                  const Tensor& grad_output, FpaParams& grads) {
  const FpaDims& d = params.dims;
  const int c = d.num_classes;
  const int g = d.group_width();
  const int p = high.pixels();
  const int batch = high.batch;

  Tensor grad_gated = grad_output;
  Matrix grad_attention(c, batch);
  for (int n = 0; n < batch; ++n) {
    for (int k = 0; k < c; ++k) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(k) * g;
      const Eigen::Index c0 = static_cast<Eigen::Index>(n) * p;
      grad_attention(k, n) = grad_output.data.block(r0, c0, g, p).cwiseProduct(acts.gated.data.block(r0, c0, g, p)).sum();
      grad_gated.data.block(r0, c0, g, p) *= acts.attention(k, n);
    }
  }

  if (!options.fixed_attention) {
    const Matrix grad_z = grad_attention.cwiseProduct(acts.attention.cwiseProduct((1.0 - acts.attention.array()).matrix()));
    const Matrix relu = acts.hidden_pre.cwiseMax(0.0);
    grads.fc2_w.noalias() += grad_z * relu.transpose();
    grads.fc2_b += grad_z.rowwise().sum();
    Matrix grad_hidden = params.fc2_w.transpose() * grad_z;
    grad_hidden.array() *= (acts.hidden_pre.array() > 0.0).cast<double>();
    grads.fc1_w.noalias() += grad_hidden * acts.pooled.transpose();
    grads.fc1_b += grad_hidden.rowwise().sum();
    const Matrix grad_pooled = params.fc1_w.transpose() * grad_hidden;
    for (int n = 0; n < batch; ++n) grad_gated.sample(n).colwise() += grad_pooled.col(n) / static_cast<double>(p);
  }

  Tensor grad_grouped = grad_gated;
  for (int k = 0; k < c; ++k) {
    grad_grouped.data.middleRows(static_cast<Eigen::Index>(k) * g, g).array().rowwise() *= acts.gate.data.row(k).array();
  }
  Matrix grad_w = Matrix::Zero(params.group_w.rows(), params.group_w.cols());
  nn::conv1x1_backward(high, params.group_w, grad_grouped, grad_w, grads.group_b, nullptr);
  if (params.block_diagonal) grad_w.array() *= params.block_mask().array();
  grads.group_w += grad_w;
}

}  // namespace fpage
