#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "root_opt/bridge.hpp"
#include "root_opt/dataset.hpp"
#include "root_opt/noise_model.hpp"
#include "root_opt/synthgen.hpp"

namespace root_opt {

struct TrainConfig {
  int epochs = 100;
  int horizon = 200;
  int batch_size = 64;
  double learning_rate = 0.001;
  double cond_dropout = 0.15;  // rho
  SynthGenConfig synthgen;
  BridgeKind bridge_kind = BridgeKind::kBrownian;
  double ou_stiffness = 0.0;
  int hidden_width = NoiseNetwork::kDefaultHiddenWidth;
  bool clip_gradients = true;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Canonical one-line description, stable across runs.
  std::string describe() const;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  long pairs_kept = 0;
  long pairs_total = 0;
  long items = 0;
  long null_items = 0;
  long steps = 0;

  double retention_rate() const {
    return pairs_total > 0 ? static_cast<double>(pairs_kept) / static_cast<double>(pairs_total) : 0.0;
  }
};

// Counters accumulated over a training run; they record what was actually
// consumed rather than what was configured.
struct RunLedger {
  long kernel_configs_drawn = 0;
  long epochs_completed = 0;
  long optimizer_steps = 0;
  long items_trained = 0;
  long null_items = 0;
  long max_batch_size = 0;
  double learning_rate = 0.0;
  double cond_dropout = 0.0;
  int horizon = 0;
  std::vector<std::string> warnings;
};

struct TrainedModel {
  NoiseNetwork network;
  std::shared_ptr<const BridgeSchedule> schedule;
  ScoreStandardization standardization;
  ScoreNormalization normalization;
  std::string fingerprint;
  RunLedger ledger;

  // Standardized pseudo-score -> normalized conditioning score.
  double standardized_to_normalized(double z) const {
    return normalization.normalize(standardization.destandardize(z));
  }
};

// Regression target for the noise network at step t: x_t - x0, i.e.
// m_t (x_T - x0) + sqrt(kappa_t) eps for the Brownian bridge.
Eigen::VectorXd training_target(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& xT, int t, const Eigen::VectorXd& eps);

// One pass of the learning phase: fresh synthetic pairs from n_e functions,
// shuffled minibatches, one Adam step per minibatch. x_T is the low design and
// x0 the high design of each pair.
EpochStats train_epoch(NoiseNetwork& net, AdamState& opt, const BridgeSchedule& s,
                       const OfflineDataset& data, const TrainConfig& cfg, int epoch,
                       RunLedger& ledger);

using EpochCallback = std::function<void(const EpochStats&)>;

TrainedModel train(const OfflineDataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

std::string hex_fingerprint(const std::string& canonical);

}  // namespace root_opt
