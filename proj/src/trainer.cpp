#include "root_opt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "root_opt/error.hpp"
#include "root_opt/rng.hpp"

namespace root_opt {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (horizon < 2) throw Error(ErrorCode::kInvalidHorizon, "diffusion horizon must be >= 2");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) {
    throw Error(ErrorCode::kInvalidRange, "conditional dropout must lie in [0, 1]");
  }
  if (hidden_width < 1) throw Error(ErrorCode::kInvalidDimension, "hidden width must be >= 1");
  if (clip_gradients && !(clip_norm > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "clip norm must be > 0");
  }
  synthgen.validate();
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "epochs=" << epochs << ";horizon=" << horizon << ";batch=" << batch_size
     << ";lr=" << learning_rate << ";rho=" << cond_dropout << ";bridge=" << to_string(bridge_kind)
     << ";ou_alpha=" << ou_stiffness << ";hidden=" << hidden_width << ";clip=" << clip_gradients
     << ";clip_norm=" << clip_norm << ";seed=" << seed << ";ell0=" << synthgen.base_lengthscale
     << ";sigma0=" << synthgen.base_variance << ";delta=" << synthgen.range_halfwidth
     << ";M=" << synthgen.grad_steps << ";eta=" << synthgen.step_size
     << ";n_p=" << synthgen.points_per_function << ";n_e=" << synthgen.functions_per_epoch
     << ";tau=" << synthgen.pair_threshold << ";start=" << to_string(synthgen.start_policy)
     << ";fit_cap=" << synthgen.fit_cap << ";noise=" << synthgen.noise_variance;
  return os.str();
}

std::string hex_fingerprint(const std::string& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

Eigen::VectorXd training_target(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& xT, int t, const Eigen::VectorXd& eps) {
  if (t < 1 || t > s.horizon) {
    throw Error(ErrorCode::kTimestepOutOfRange, "training target needs 1 <= t <= T");
  }
  if (x0.size() != xT.size() || x0.size() != eps.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "training target operands differ in dimension");
  }
  const double noise_scale = std::sqrt(s.kappa[t]);
  if (s.kind == BridgeKind::kBrownian) return s.m[t] * (xT - x0) + noise_scale * eps;
  return (s.source_weight[t] - 1.0) * x0 + s.m[t] * xT + noise_scale * eps;
}

EpochStats train_epoch(NoiseNetwork& net, AdamState& opt, const BridgeSchedule& s,
                       const OfflineDataset& data, const TrainConfig& cfg, int epoch,
                       RunLedger& ledger) {
  if (data.size() == 0) throw Error(ErrorCode::kInsufficientData, "offline dataset is empty");
  if (net.design_dim() != data.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "network and dataset dimensions differ");
  }
  const RngStream master(cfg.seed);
  const int n_e = cfg.synthgen.functions_per_epoch;
  const SyntheticDataset synth =
      generate_synthetic_dataset(data, cfg.synthgen, master.child("synthgen"), epoch * n_e, n_e);
  ledger.kernel_configs_drawn += synth.kernel_configs_drawn;

  EpochStats stats;
  stats.epoch = epoch;
  stats.pairs_total = synth.pairs_total;
  stats.pairs_kept = synth.pairs.size();
  if (synth.pairs.empty()) {
    throw Error(ErrorCode::kEmptySyntheticData,
                "every synthetic pair was filtered out in epoch " + std::to_string(epoch));
  }

  const ScoreStandardization standardization = ScoreStandardization::fit(data.scores);
  auto to_normalized = [&](double z) {
    return data.normalization.normalize(standardization.destandardize(z));
  };

  RngStream rng = master.child("epoch", static_cast<std::uint64_t>(epoch));
  const auto& pairs = synth.pairs;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(pairs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng.engine());

  const int d = static_cast<int>(data.dim());
  const InputLayout layout{d};
  const double T = s.horizon;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    const auto batch = static_cast<Eigen::Index>(end - start);
    Eigen::MatrixXd inputs(layout.width(), batch);
    Eigen::MatrixXd targets(d, batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const Eigen::Index row = order[start + static_cast<std::size_t>(j)];
      const Eigen::VectorXd x0 = pairs.high_designs.row(row).transpose();
      const Eigen::VectorXd xT = pairs.low_designs.row(row).transpose();
      const int t = static_cast<int>(rng.uniform_int(1, s.horizon));
      const Eigen::VectorXd eps = rng.normal_vector(d);
      const bool drop = rng.bernoulli(cfg.cond_dropout);
      std::optional<Condition> cond;
      if (!drop) {
        cond = Condition{to_normalized(pairs.low_scores[row]), to_normalized(pairs.high_scores[row])};
      } else {
        ++stats.null_items;
      }
      write_input_column(inputs.col(j), forward_sample(s, x0, xT, t, eps), t / T, cond);
      targets.col(j) = training_target(s, x0, xT, t, eps);
    }

    LossAndGradients lg = loss_and_gradients(net, inputs, targets);
    if (cfg.clip_gradients) {
      const double norm = std::sqrt(lg.gradients.squared_norm());
      if (norm > cfg.clip_norm) lg.gradients.scale(cfg.clip_norm / norm);
    }
    adam_step(net, opt, lg.gradients, cfg.learning_rate);

    loss_sum += lg.loss * static_cast<double>(batch);
    stats.items += batch;
    stats.steps += 1;
    ledger.max_batch_size = std::max<long>(ledger.max_batch_size, batch);
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.items);

  ledger.epochs_completed += 1;
  ledger.optimizer_steps += stats.steps;
  ledger.items_trained += stats.items;
  ledger.null_items += stats.null_items;
  return stats;
}

TrainedModel train(const OfflineDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw Error(ErrorCode::kInsufficientData, "offline dataset is empty");

  const RngStream master(cfg.seed);
  RngStream init_rng = master.child("init");
  TrainedModel model{NoiseNetwork::initialize(static_cast<int>(data.dim()), cfg.hidden_width, init_rng),
                     cached_schedule(cfg.bridge_kind, cfg.horizon, cfg.ou_stiffness),
                     ScoreStandardization::fit(data.scores),
                     data.normalization,
                     hex_fingerprint(cfg.describe()),
                     RunLedger{}};
  model.ledger.learning_rate = cfg.learning_rate;
  model.ledger.cond_dropout = cfg.cond_dropout;
  model.ledger.horizon = cfg.horizon;
  if (cfg.epochs == 0) {
    model.ledger.warnings.push_back("epochs = 0: returning the initialized network untrained");
    return model;
  }

  AdamState opt = AdamState::for_network(model.network);
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochStats stats = train_epoch(model.network, opt, *model.schedule, data, cfg, e, model.ledger);
    if (on_epoch) on_epoch(stats);
  }
  return model;
}

}  // namespace root_opt
