#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/SVD>

#include "sgcn/errors.hpp"
#include "sgcn/ops.hpp"
#include "sgcn/tensor.hpp"

namespace sgcn {

using Rng = std::mt19937_64;

/// Orthogonal initialisation through the SVD of a Gaussian sample M = U S V^T.
/// Tall or square shapes take the thin U, so W^T W = I; wide shapes take the
/// thin V^T, so W W^T = I.
inline std::vector<double> orth_init(std::size_t rows, std::size_t cols, Rng& rng, int max_attempts = 3) {
  if (rows == 0 || cols == 0) throw InitError("orth_init: shape must be at least 1x1");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal(rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) continue;
    Eigen::MatrixXd w = rows >= cols ? Eigen::MatrixXd(svd.matrixU()) : Eigen::MatrixXd(svd.matrixV().transpose());
    if (!w.allFinite()) continue;
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = w(i, j);
    return out;
  }
  throw InitError("orth_init: SVD did not converge after " + std::to_string(max_attempts) + " samples");
}

/// ||W^T W - I||_F^2 (or ||W W^T - I||_F^2 when W is wide), with I sized to
/// the smaller dimension of W.
inline Tensor orthogonality_penalty(const Tensor& w) {
  detail::require_matrix(w, "orthogonality_penalty");
  const bool wide = w.dim(0) < w.dim(1);
  const Tensor gram = wide ? matmul(w, transpose(w)) : matmul(transpose(w), w);
  return squared_norm(sub(gram, Tensor::identity(gram.dim(0))));
}

}  // namespace sgcn
