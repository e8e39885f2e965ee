#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/bridge.hpp"
#include "root_opt/dataset.hpp"
#include "root_opt/noise_model.hpp"
#include "root_opt/rng.hpp"
#include "root_opt/trainer.hpp"

namespace root_opt {

struct SampleConfig {
  int num_candidates = 128;      // Q
  int denoise_steps = 200;       // must equal the trained horizon
  double target_scale = 0.8;     // alpha
  double guidance_weight = -1.5; // beta
  // Best objective value in normalized units; when unset the best offline
  // normalized score is used.
  std::optional<double> oracle_best;
  std::uint64_t seed = 0;

  void validate() const;
};

// (1 + beta) * eps(x_t, t, y) - beta * eps(x_t, t, null)
Eigen::VectorXd guided_noise(const NoisePredictor& net, const Eigen::VectorXd& xt, double t_norm,
                             const Condition& y, double guidance_weight);

// Column-batched form: xt is d x B, one condition per column.
Eigen::MatrixXd guided_noise_batch(const NoisePredictor& net, const Eigen::MatrixXd& xt, double t_norm,
                                   const std::vector<Condition>& y, double guidance_weight);

// One backward step x_t -> x_{t-1}; no noise is injected at t = 1.
Eigen::VectorXd denoise_step(const BridgeSchedule& s, const NoisePredictor& net,
                             const Eigen::VectorXd& xt, const Eigen::VectorXd& xT, int t,
                             const Condition& y, double guidance_weight, RngStream& rng);

struct CandidateSet {
  Eigen::MatrixXd designs;                // Q x d, unprojected
  std::vector<Eigen::Index> seed_indices;  // rows of the offline dataset, best first
  std::vector<Condition> conditions;
  int denoise_steps_run = 0;
  double target_scale = 0.0;
  double guidance_weight = 0.0;
  double oracle_best = 0.0;

  Eigen::Index size() const { return designs.rows(); }
};

CandidateSet sample_candidates(const NoisePredictor& net, const BridgeSchedule& s,
                               const ScoreNormalization& normalization, const OfflineDataset& data,
                               const SampleConfig& cfg);

CandidateSet sample_candidates(const TrainedModel& model, const OfflineDataset& data,
                               const SampleConfig& cfg);

}  // namespace root_opt
