#include "root_opt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "root_opt/error.hpp"

namespace root_opt {

std::string_view to_string(NormalizationMode mode) {
  return mode == NormalizationMode::kOracleRange ? "oracle_range" : "dataset_range";
}

NormalizationMode normalization_mode_from_string(std::string_view name) {
  if (name == "oracle_range") return NormalizationMode::kOracleRange;
  if (name == "dataset_range") return NormalizationMode::kDatasetRange;
  throw Error(ErrorCode::kInvalidArgument, "unknown normalization mode '" + std::string(name) + "'");
}

ScoreNormalization ScoreNormalization::from_range(double worst, double best, NormalizationMode mode) {
  ScoreNormalization n;
  n.offset = worst;
  n.scale = best - worst;
  n.mode = mode;
  if (!(n.scale > 0.0) || !std::isfinite(n.scale)) n.scale = 1.0;
  return n;
}

ScoreStandardization ScoreStandardization::fit(const Eigen::VectorXd& scores) {
  ScoreStandardization s;
  if (scores.size() == 0) return s;
  s.mean = scores.mean();
  const double var = (scores.array() - s.mean).square().mean();
  s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

void OfflineDataset::validate() const {
  if (designs.rows() != scores.size()) {
    throw Error(ErrorCode::kShapeMismatch, "designs and scores have different row counts");
  }
  if (!designs.allFinite() || !scores.allFinite()) {
    throw Error(ErrorCode::kNonFiniteInput, "dataset contains non-finite values");
  }
  if (!(normalization.scale > 0.0) || !std::isfinite(normalization.offset)) {
    throw Error(ErrorCode::kInvalidArgument, "normalization scale must be positive");
  }
}

Eigen::VectorXd OfflineDataset::normalized_scores() const {
  return scores.unaryExpr([this](double y) { return normalization.normalize(y); });
}

std::vector<Eigen::Index> OfflineDataset::ranking_descending() const {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [this](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace root_opt
