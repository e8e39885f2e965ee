#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/dataset.hpp"
#include "root_opt/gp_posterior.hpp"
#include "root_opt/rng.hpp"

namespace root_opt {

enum class StartPolicy { kHighest, kRandom, kLowest };

std::string_view to_string(StartPolicy policy);
StartPolicy start_policy_from_string(std::string_view name);

struct SynthGenConfig {
  double base_lengthscale = 1.0;  // l0
  double base_variance = 1.0;     // sigma0^2
  double range_halfwidth = 0.25;  // delta
  int grad_steps = 100;           // M
  double step_size = 0.001;       // eta
  int points_per_function = 1024; // n_p
  int functions_per_epoch = 8;    // n_e
  double pair_threshold = 0.001;  // tau
  StartPolicy start_policy = StartPolicy::kHighest;
  // Each GP is fitted on at most this many offline points.
  int fit_cap = 512;
  double noise_variance = 1e-4;

  static SynthGenConfig continuous_defaults();
  static SynthGenConfig discrete_defaults();

  void validate() const;
};

// Paired low/high designs. Row i of low_designs and high_designs start from the
// same offline design (start_indices[i]) on the same function.
// Scores are GP posterior means in standardized units.
struct SyntheticPairBatch {
  Eigen::MatrixXd low_designs;
  Eigen::VectorXd low_scores;
  Eigen::MatrixXd high_designs;
  Eigen::VectorXd high_scores;
  std::vector<int> function_ids;
  std::vector<Eigen::Index> start_indices;
  // Set when the threshold filter removed every pair.
  bool empty_after_filter = false;

  Eigen::Index size() const { return low_designs.rows(); }
  bool empty() const { return size() == 0; }

  void append(const SyntheticPairBatch& other);
  SyntheticPairBatch select_rows(const std::vector<Eigen::Index>& rows) const;
};

KernelConfig sample_kernel_config(RngStream& rng, const SynthGenConfig& cfg);

enum class FlowDirection { kAscend, kDescend };

// M fixed-size gradient steps x <- x +/- eta * grad g(x). Throws NonFiniteIterate.
Eigen::VectorXd gradient_flow(const GpPosteriorMean& gp, const Eigen::VectorXd& start, int steps,
                              double step_size, FlowDirection direction);

// Batched flow over the rows of `starts`. Rows that become non-finite are
// frozen and flagged in `diverged` instead of throwing.
Eigen::MatrixXd gradient_flow_batch(const GpPosteriorMean& gp, const Eigen::MatrixXd& starts,
                                    int steps, double step_size, FlowDirection direction,
                                    std::vector<bool>& diverged);

std::vector<Eigen::Index> select_start_points(const OfflineDataset& data, int count,
                                              StartPolicy policy, RngStream& rng);

// One synthetic function: sample kernel, fit the posterior on standardized
// scores, run descent/ascent from n_p start points and keep pairs whose
// pseudo-score gap is at least tau.
SyntheticPairBatch generate_function_batch(const OfflineDataset& data, const SynthGenConfig& cfg,
                                           RngStream rng, int function_id);

// Keeps rows with high - low >= tau, in order.
SyntheticPairBatch filter_pairs(const SyntheticPairBatch& batch, double tau);

struct SyntheticDataset {
  SyntheticPairBatch pairs;
  long pairs_total = 0;  // before filtering
  long kernel_configs_drawn = 0;
};

// Functions first_function_id .. first_function_id + count - 1, each on its own
// child stream of `master`, concatenated in function-id order.
SyntheticDataset generate_synthetic_dataset(const OfflineDataset& data, const SynthGenConfig& cfg,
                                            const RngStream& master, int first_function_id,
                                            int count);

}  // namespace root_opt
