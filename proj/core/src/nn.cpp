#include "fpage/nn.hpp"

#include "fpage/errors.hpp"

#include <cmath>

namespace fpage::nn {

void conv1x1_forward(const Tensor& in, const Matrix& w, const Vector& b, Tensor& out) {
  out.batch = in.batch;
  out.height = in.height;
  out.width = in.width;
  out.data.noalias() = w * in.data;
  out.data.colwise() += b;
}

void conv1x1_backward(const Tensor& in, const Matrix& w, const Tensor& grad_out, Matrix& grad_w, Vector& grad_b,
                      Tensor* grad_in) {
  grad_w.noalias() += grad_out.data * in.data.transpose();
  grad_b += grad_out.data.rowwise().sum();
  if (grad_in != nullptr) {
    grad_in->batch = in.batch;
    grad_in->height = in.height;
    grad_in->width = in.width;
    grad_in->data.noalias() = w.transpose() * grad_out.data;
  }
}

Matrix im2col3x3(const Tensor& in) {
  const int c = in.channels();
  const int h = in.height;
  const int w = in.width;
  Matrix cols = Matrix::Zero(9 * c, in.data.cols());
  for (int n = 0; n < in.batch; ++n) {
    const Eigen::Index base = static_cast<Eigen::Index>(n) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const Eigen::Index dst = base + i * w + j;
        for (int dy = -1; dy <= 1; ++dy) {
          const int si = i + dy;
          if (si < 0 || si >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int sj = j + dx;
            if (sj < 0 || sj >= w) continue;
            const int t = (dy + 1) * 3 + (dx + 1);
            cols.block(static_cast<Eigen::Index>(t) * c, dst, c, 1) = in.data.col(base + si * w + sj);
          }
        }
      }
    }
  }
  return cols;
}

void col2im3x3(const Matrix& cols, Tensor& grad_in) {
  const int c = grad_in.channels();
  const int h = grad_in.height;
  const int w = grad_in.width;
  grad_in.data.setZero();
  for (int n = 0; n < grad_in.batch; ++n) {
    const Eigen::Index base = static_cast<Eigen::Index>(n) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const Eigen::Index src = base + i * w + j;
        for (int dy = -1; dy <= 1; ++dy) {
          const int si = i + dy;
          if (si < 0 || si >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int sj = j + dx;
            if (sj < 0 || sj >= w) continue;
            const int t = (dy + 1) * 3 + (dx + 1);
            grad_in.data.col(base + si * w + sj) += cols.block(static_cast<Eigen::Index>(t) * c, src, c, 1);
          }
        }
      }
    }
  }
}

void conv3x3_forward(const Tensor& in, const Matrix& w, const Vector& b, Tensor& out, Matrix& cols) {
  if (w.cols() != 9 * in.channels()) {
    throw InvalidArgument("conv3x3: weight expects " + std::to_string(w.cols() / 9) + " input channels, got " +
                          std::to_string(in.channels()));
  }
  cols = im2col3x3(in);
  out.batch = in.batch;
  out.height = in.height;
  out.width = in.width;
  out.data.noalias() = w * cols;
  out.data.colwise() += b;
}

void conv3x3_backward(const Matrix& cols, const Matrix& w, const Tensor& grad_out, Matrix& grad_w, Vector& grad_b,
                      Tensor& grad_in) {
  grad_w.noalias() += grad_out.data * cols.transpose();
  grad_b += grad_out.data.rowwise().sum();
  const Matrix grad_cols = w.transpose() * grad_out.data;
  grad_in.batch = grad_out.batch;
  grad_in.height = grad_out.height;
  grad_in.width = grad_out.width;
  grad_in.data.resize(w.cols() / 9, grad_out.data.cols());
  col2im3x3(grad_cols, grad_in);
}

void group_norm_forward(const Tensor& in, int groups, const Vector& gamma, const Vector& beta, Tensor& out,
                        GroupNormCache& cache) {
  const int c = in.channels();
  if (groups < 1 || c % groups != 0) {
    throw InvalidArgument("group norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  }
  const int per_group = c / groups;
  const int p = in.pixels();
  cache.normalized.resize(c, in.data.cols());
  cache.inv_std.resize(groups, in.batch);
  out.batch = in.batch;
  out.height = in.height;
  out.width = in.width;
  out.data.resize(c, in.data.cols());
  for (int n = 0; n < in.batch; ++n) {
    for (int g = 0; g < groups; ++g) {
      const auto x = in.data.block(static_cast<Eigen::Index>(g) * per_group, static_cast<Eigen::Index>(n) * p, per_group, p);
      const double mean = x.mean();
      const double var = (x.array() - mean).square().mean();
      const double inv_std = 1.0 / std::sqrt(var + kGroupNormEps);
      cache.inv_std(g, n) = inv_std;
      auto xhat = cache.normalized.block(static_cast<Eigen::Index>(g) * per_group, static_cast<Eigen::Index>(n) * p, per_group, p);
      xhat = (x.array() - mean) * inv_std;
      out.data.block(static_cast<Eigen::Index>(g) * per_group, static_cast<Eigen::Index>(n) * p, per_group, p) =
          (xhat.array().colwise() * gamma.segment(g * per_group, per_group).array()).colwise() +
          beta.segment(g * per_group, per_group).array();
    }
  }
}

void group_norm_backward(const Tensor& grad_out, int groups, const Vector& gamma, const GroupNormCache& cache,
                         Vector& grad_gamma, Vector& grad_beta, Tensor& grad_in) {
  const int c = grad_out.channels();
  const int per_group = c / groups;
  const int p = grad_out.pixels();
  const double m = static_cast<double>(per_group) * p;
  grad_gamma += (grad_out.data.array() * cache.normalized.array()).rowwise().sum().matrix();
  grad_beta += grad_out.data.rowwise().sum();
  grad_in.batch = grad_out.batch;
  grad_in.height = grad_out.height;
  grad_in.width = grad_out.width;
  grad_in.data.resize(c, grad_out.data.cols());
  for (int n = 0; n < grad_out.batch; ++n) {
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(g) * per_group;
      const Eigen::Index c0 = static_cast<Eigen::Index>(n) * p;
      const Eigen::ArrayXXd dxhat =
          grad_out.data.block(r0, c0, per_group, p).array().colwise() * gamma.segment(r0, per_group).array();
      const auto xhat = cache.normalized.block(r0, c0, per_group, p).array();
      const double sum_d = dxhat.sum();
      const double sum_dx = (dxhat * xhat).sum();
      grad_in.data.block(r0, c0, per_group, p) =
          (cache.inv_std(g, n) / m) * (m * dxhat - sum_d - xhat * sum_dx);
    }
  }
}

Matrix global_avg_pool(const Tensor& in) {
  Matrix pooled(in.channels(), in.batch);
  for (int n = 0; n < in.batch; ++n) pooled.col(n) = in.sample(n).rowwise().mean();
  return pooled;
}

void global_avg_pool_backward(const Matrix& grad_pooled, Tensor& grad_in) {
  const double scale = 1.0 / grad_in.pixels();
  for (int n = 0; n < grad_in.batch; ++n) grad_in.sample(n).colwise() = grad_pooled.col(n) * scale;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    const double mx = logits.col(n).maxCoeff();
    out.col(n) = (logits.col(n).array() - mx).exp();
    out.col(n) /= out.col(n).sum();
  }
  return out;
}

void fan_in_uniform(Matrix& w, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

}  // namespace fpage::nn
