#pragma once

#include <Eigen/Core>

#include <string>

namespace fpage {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense activation for a batch of feature maps. Storage is channels x pixels,
// with pixels laid out sample-major, then row-major inside a sample:
// column = n * height * width + i * width + j.
struct Tensor {
  int batch = 1;
  int height = 0;
  int width = 0;
  Matrix data;

  Tensor() = default;
  Tensor(int batch_size, int h, int w, int channels)
      : batch(batch_size), height(h), width(w), data(Matrix::Zero(channels, static_cast<Eigen::Index>(batch_size) * h * w)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }

  auto sample(int n) { return data.middleCols(static_cast<Eigen::Index>(n) * pixels(), pixels()); }
  auto sample(int n) const { return data.middleCols(static_cast<Eigen::Index>(n) * pixels(), pixels()); }

  double& at(int n, int i, int j, int c) { return data(c, static_cast<Eigen::Index>(n) * pixels() + i * width + j); }
  double at(int n, int i, int j, int c) const { return data(c, static_cast<Eigen::Index>(n) * pixels() + i * width + j); }

  bool same_grid(const Tensor& other) const {
    return batch == other.batch && height == other.height && width == other.width;
  }

  // "(n=2, h=4, w=4, c=512)"
  std::string shape_string() const;
};

// Stacks single-sample tensors that share (height, width, channels).
Tensor stack(const Tensor* const* samples, int count);

}  // namespace fpage
