#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace root_opt {

enum class NormalizationMode { kOracleRange, kDatasetRange };

std::string_view to_string(NormalizationMode mode);
NormalizationMode normalization_mode_from_string(std::string_view name);

// Affine map from raw scores to normalized scores: (y - offset) / scale.
struct ScoreNormalization {
  double offset = 0.0;
  double scale = 1.0;
  NormalizationMode mode = NormalizationMode::kDatasetRange;

  double normalize(double y) const { return (y - offset) / scale; }
  double denormalize(double z) const { return z * scale + offset; }

  static ScoreNormalization from_range(double worst, double best, NormalizationMode mode);
};

// Zero-mean, unit-variance standardization used before GP fitting.
struct ScoreStandardization {
  double mean = 0.0;
  double stddev = 1.0;

  double standardize(double y) const { return (y - mean) / stddev; }
  double destandardize(double z) const { return z * stddev + mean; }

  static ScoreStandardization fit(const Eigen::VectorXd& scores);
};

// Offline dataset: n designs (rows) with raw scores.
struct OfflineDataset {
  Eigen::MatrixXd designs;
  Eigen::VectorXd scores;
  ScoreNormalization normalization;

  Eigen::Index size() const { return designs.rows(); }
  Eigen::Index dim() const { return designs.cols(); }

  // Throws on shape mismatch, non-finite rows or a non-invertible normalization.
  void validate() const;

  Eigen::VectorXd normalized_scores() const;

  // Indices sorted by score, best first; ties keep index order.
  std::vector<Eigen::Index> ranking_descending() const;
};

}  // namespace root_opt
