#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/dataset.hpp"
#include "root_opt/sampler.hpp"

namespace root_opt {

enum class InputKind { kContinuous, kDiscrete };

struct TaskOptions {
  int sequence_length = 8;  // L
  int alphabet_size = 4;    // V
  // Overrides the random onehot-additive weights (L x V, positive).
  std::optional<Eigen::MatrixXd> onehot_weights;
  int landscape_anchors = 40;
  double landscape_lengthscale = 0.2;
};

struct Task {
  std::string name;
  int dim = 0;
  InputKind kind = InputKind::kContinuous;
  Eigen::VectorXd lower;  // continuous bounds
  Eigen::VectorXd upper;
  int sequence_length = 0;
  int alphabet_size = 0;
  std::function<double(const Eigen::VectorXd&)> oracle;
  double known_best = 0.0;
  double known_worst = 0.0;
  Eigen::VectorXd best_design;
  std::uint64_t seed = 0;

  // Box projection for continuous tasks, one-hot decoding for discrete ones.
  Eigen::VectorXd prepare(const Eigen::VectorXd& x) const;
  double score(const Eigen::VectorXd& x) const { return oracle(prepare(x)); }
};

// Supported: gp-landscape, neg-ackley, neg-styblinski, onehot-additive.
// For onehot-additive the dimension argument is ignored (d = L * V).
Task make_task(std::string_view name, int dim, std::uint64_t seed, const TaskOptions& options = {});

std::vector<std::string> task_names();

// Per-position argmax with first-index tie-breaking.
Eigen::VectorXd decode_onehot(const Eigen::VectorXd& x, int sequence_length, int alphabet_size);
bool is_valid_onehot(const Eigen::VectorXd& x, int sequence_length, int alphabet_size);

struct DatasetOptions {
  bool oracle_range_normalization = true;
  double score_noise_std = 0.0;  // Gaussian perturbation of stored scores
};

OfflineDataset build_offline_dataset(const Task& task, int n, double coverage_percent, std::uint64_t seed,
                                     const DatasetOptions& options = {});

struct Percentiles {
  double p50 = 0.0;
  double p80 = 0.0;
  double p100 = 0.0;
};

// Nearest rank on the ascending sort: element ceil(q/100 * Q) (1-based).
double nearest_rank_percentile(std::vector<double> values, double q);

struct EvalReport {
  std::string task;
  std::uint64_t seed = 0;
  Eigen::MatrixXd evaluated_designs;  // after projection / decoding
  Eigen::VectorXd oracle_scores;      // candidate order
  Eigen::VectorXd normalized_scores;
  Percentiles percentiles;
  Percentiles normalized;
  double offline_best = 0.0;
  double normalized_offline_best = 0.0;
  double valid_fraction = 1.0;  // share of candidates that decode to valid designs
  std::string fingerprint;
};

EvalReport evaluate(const Task& task, const CandidateSet& candidates, const OfflineDataset& data);

}  // namespace root_opt
