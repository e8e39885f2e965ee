#include "root_opt/gp_posterior.hpp"

#include <cmath>
#include <string>

#include "root_opt/error.hpp"

namespace root_opt {

void KernelConfig::validate() const {
  if (!(lengthscale > 0.0) || !(signal_variance > 0.0) || !(noise_variance >= 0.0) ||
      !std::isfinite(lengthscale) || !std::isfinite(signal_variance) ||
      !std::isfinite(noise_variance)) {
    throw Error(ErrorCode::kInvalidRange, "kernel requires lengthscale > 0, signal_variance > 0, "
                                          "noise_variance >= 0");
  }
}

double rbf_kernel(const KernelConfig& kernel, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double sq = (a - b).squaredNorm();
  return kernel.signal_variance * std::exp(-0.5 * sq / (kernel.lengthscale * kernel.lengthscale));
}

namespace {

// Squared distances, rows = points, cols = training inputs. Differences are
// formed explicitly rather than through |a|^2 + |b|^2 - 2ab so that the result
// is exact to rounding near the training points.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points, const Eigen::MatrixXd& train) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(points.rows(), train.rows());
  for (Eigen::Index j = 0; j < train.rows(); ++j) {
    auto col = d.col(j).array();
    for (Eigen::Index k = 0; k < points.cols(); ++k) col += (points.col(k).array() - train(j, k)).square();
  }
  return d;
}

}  // namespace

GpPosteriorMean fit_posterior(const Eigen::MatrixXd& designs, const Eigen::VectorXd& scores,
                              std::span<const Eigen::Index> subset, const KernelConfig& kernel) {
  kernel.validate();
  if (subset.empty()) throw Error(ErrorCode::kEmptySubset, "fit subset is empty");
  if (designs.rows() != scores.size()) {
    throw Error(ErrorCode::kShapeMismatch, "designs and scores have different row counts");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(subset.size());
  const Eigen::Index d = designs.cols();

  GpPosteriorMean gp;
  gp.kernel_ = kernel;
  gp.fit_indices_.assign(subset.begin(), subset.end());
  gp.train_inputs_.resize(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = subset[static_cast<std::size_t>(i)];
    if (src < 0 || src >= designs.rows()) {
      throw Error(ErrorCode::kEmptySubset, "subset index " + std::to_string(src) + " out of range");
    }
    gp.train_inputs_.row(i) = designs.row(src);
    y[i] = scores[src];
  }
  if (!gp.train_inputs_.allFinite() || !y.allFinite()) {
    throw Error(ErrorCode::kNonFiniteInput, "non-finite design or score in fit subset");
  }

  const double inv_two_l2 = 0.5 / (kernel.lengthscale * kernel.lengthscale);
  Eigen::MatrixXd gram =
      (-inv_two_l2 * squared_distances(gp.train_inputs_, gp.train_inputs_)).array().exp() *
      kernel.signal_variance;

  const double y_norm = y.norm();
  double jitter = 0.0;
  const double jitter_start = 1e-8 * kernel.signal_variance;
  const double jitter_max = 1e-2 * kernel.signal_variance;
  while (true) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += kernel.noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd alpha = llt.solve(y);
      const double residual = (a * alpha - y).norm();
      if (alpha.allFinite() && residual <= 1e-8 * y_norm) {
        gp.alpha_ = std::move(alpha);
        gp.jitter_ = jitter;
        return gp;
      }
    }
    if (jitter == 0.0) {
      jitter = jitter_start;
    } else {
      jitter *= 10.0;
    }
    if (jitter > jitter_max * (1.0 + 1e-12)) {
      throw Error(ErrorCode::kFactorizationFailure,
                  "Gram matrix not positive definite after maximum jitter");
    }
  }
}

GpPosteriorMean fit_posterior(const OfflineDataset& data, std::span<const Eigen::Index> subset,
                              const KernelConfig& kernel) {
  return fit_posterior(data.designs, data.scores, subset, kernel);
}

void GpPosteriorMean::check_dim(Eigen::Index d) const {
  if (d != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(d) +
                                                   ", posterior expects " + std::to_string(dim()));
  }
}

Eigen::MatrixXd GpPosteriorMean::cross_kernel(const Eigen::MatrixXd& points) const {
  const double inv_two_l2 = 0.5 / (kernel_.lengthscale * kernel_.lengthscale);
  Eigen::MatrixXd k = squared_distances(points, train_inputs_);
  k.array() = (k.array() * -inv_two_l2).exp() * kernel_.signal_variance;
  return k;
}

double GpPosteriorMean::mean(const Eigen::VectorXd& x) const {
  check_dim(x.size());
  return mean_batch(x.transpose())[0];
}

Eigen::VectorXd GpPosteriorMean::gradient(const Eigen::VectorXd& x) const {
  check_dim(x.size());
  return gradient_batch(x.transpose()).row(0).transpose();
}

Eigen::VectorXd GpPosteriorMean::mean_batch(const Eigen::MatrixXd& points) const {
  check_dim(points.cols());
  return cross_kernel(points) * alpha_;
}

// d/dx sum_i alpha_i k(x, x_i) = sum_i alpha_i k(x, x_i) (x_i - x) / l^2
Eigen::MatrixXd GpPosteriorMean::gradient_batch(const Eigen::MatrixXd& points) const {
  check_dim(points.cols());
  Eigen::MatrixXd weighted = cross_kernel(points);
  weighted.array().rowwise() *= alpha_.transpose().array();
  const Eigen::VectorXd row_sums = weighted.rowwise().sum();
  Eigen::MatrixXd grad = weighted * train_inputs_;
  grad -= row_sums.asDiagonal() * points;
  grad /= kernel_.lengthscale * kernel_.lengthscale;
  return grad;
}

}  // namespace root_opt
