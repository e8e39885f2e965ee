#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/dataset.hpp"

namespace root_opt {

// RBF kernel k(x, x') = signal_variance * exp(-0.5 * |x - x'|^2 / lengthscale^2)
// plus observation noise on the Gram diagonal.
struct KernelConfig {
  double lengthscale = 1.0;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;

  void validate() const;
};

double rbf_kernel(const KernelConfig& kernel, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Closed-form zero-prior-mean GP posterior mean g(x) = k_x^T (K + s_n^2 I)^-1 y.
// Immutable once fitted; safe to share across threads.
class GpPosteriorMean {
 public:
  const KernelConfig& kernel() const { return kernel_; }
  const Eigen::MatrixXd& train_inputs() const { return train_inputs_; }
  const Eigen::VectorXd& solve_vector() const { return alpha_; }
  const std::vector<Eigen::Index>& fit_indices() const { return fit_indices_; }
  // Extra diagonal added beyond noise_variance to make the Gram matrix factor.
  double jitter() const { return jitter_; }
  Eigen::Index dim() const { return train_inputs_.cols(); }

  double mean(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  // Batched forms; rows of `points` are query designs.
  Eigen::VectorXd mean_batch(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd gradient_batch(const Eigen::MatrixXd& points) const;

 private:
  friend GpPosteriorMean fit_posterior(const Eigen::MatrixXd& designs, const Eigen::VectorXd& scores,
                                       std::span<const Eigen::Index> subset,
                                       const KernelConfig& kernel);

  // Cross-kernel matrix, rows = query points, cols = training points.
  Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& points) const;
  void check_dim(Eigen::Index d) const;

  KernelConfig kernel_;
  Eigen::MatrixXd train_inputs_;
  Eigen::VectorXd alpha_;
  std::vector<Eigen::Index> fit_indices_;
  double jitter_ = 0.0;
};

// Fits on scores exactly as given (callers standardize beforehand when they
// want a centred prior). Cholesky with jitter escalation: the configured noise
// first, then 1e-8 * signal_variance growing by 10x up to 1e-2 * signal_variance.
GpPosteriorMean fit_posterior(const Eigen::MatrixXd& designs, const Eigen::VectorXd& scores,
                              std::span<const Eigen::Index> subset, const KernelConfig& kernel);

GpPosteriorMean fit_posterior(const OfflineDataset& data, std::span<const Eigen::Index> subset,
                              const KernelConfig& kernel);

}  // namespace root_opt
