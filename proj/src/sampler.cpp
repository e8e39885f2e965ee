#include "root_opt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "root_opt/error.hpp"

namespace root_opt {

void SampleConfig::validate() const {
  if (num_candidates < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one candidate");
  if (denoise_steps < 2) throw Error(ErrorCode::kInvalidHorizon, "denoise steps must be >= 2");
  if (!std::isfinite(target_scale) || !std::isfinite(guidance_weight)) {
    throw Error(ErrorCode::kNonFiniteInput, "guidance parameters must be finite");
  }
  if (oracle_best && !std::isfinite(*oracle_best)) {
    throw Error(ErrorCode::kNonFiniteInput, "oracle best must be finite");
  }
}

Eigen::MatrixXd guided_noise_batch(const NoisePredictor& net, const Eigen::MatrixXd& xt, double t_norm,
                                   const std::vector<Condition>& y, double guidance_weight) {
  const Eigen::Index d = xt.rows();
  const Eigen::Index B = xt.cols();
  if (static_cast<Eigen::Index>(y.size()) != B) {
    throw Error(ErrorCode::kShapeMismatch, "one condition per column is required");
  }
  if (!xt.allFinite() || !std::isfinite(t_norm)) {
    throw Error(ErrorCode::kNonFiniteInput, "guided noise received a non-finite input");
  }
  // Two calls of equal width, so a single column matches NoiseNetwork::forward bit for bit.
  Eigen::MatrixXd cond_in(d + kConditionWidth, B), uncond_in(d + kConditionWidth, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Eigen::VectorXd x = xt.col(j);
    if (!std::isfinite(y[j].source_score) || !std::isfinite(y[j].target_score)) {
      throw Error(ErrorCode::kNonFiniteInput, "guided noise received a non-finite condition");
    }
    write_input_column(cond_in.col(j), x, t_norm, y[j]);
    write_input_column(uncond_in.col(j), x, t_norm, std::nullopt);
  }
  const Eigen::MatrixXd cond = net.predict(cond_in);
  const Eigen::MatrixXd uncond = net.predict(uncond_in);
  return (1.0 + guidance_weight) * cond - guidance_weight * uncond;
}

Eigen::VectorXd guided_noise(const NoisePredictor& net, const Eigen::VectorXd& xt, double t_norm,
                             const Condition& y, double guidance_weight) {
  return guided_noise_batch(net, xt, t_norm, {y}, guidance_weight).col(0);
}

Eigen::VectorXd denoise_step(const BridgeSchedule& s, const NoisePredictor& net,
                             const Eigen::VectorXd& xt, const Eigen::VectorXd& xT, int t,
                             const Condition& y, double guidance_weight, RngStream& rng) {
  if (t < 1 || t > s.horizon) {
    throw Error(ErrorCode::kTimestepOutOfRange, "denoise step needs 1 <= t <= T");
  }
  const Eigen::VectorXd eps_hat =
      guided_noise(net, xt, static_cast<double>(t) / s.horizon, y, guidance_weight);
  Eigen::VectorXd next = backward_transition_mean(s, xt, xT, eps_hat, t);
  if (t > 1) next += std::sqrt(s.kappa_tilde[t - 1]) * rng.normal_vector(xt.size());
  return next;
}

CandidateSet sample_candidates(const NoisePredictor& net, const BridgeSchedule& s,
                               const ScoreNormalization& normalization, const OfflineDataset& data,
                               const SampleConfig& cfg) {
  cfg.validate();
  if (cfg.denoise_steps != s.horizon) {
    throw Error(ErrorCode::kInvalidHorizon,
                "denoise steps (" + std::to_string(cfg.denoise_steps) +
                    ") must equal the schedule horizon (" + std::to_string(s.horizon) + ")");
  }
  if (data.size() < cfg.num_candidates) {
    throw Error(ErrorCode::kInsufficientData, "offline dataset has fewer designs than candidates requested");
  }
  if (net.design_dim() != data.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model dimension " + std::to_string(net.design_dim()) + " does not match data dimension " +
                    std::to_string(data.dim()));
  }

  const auto ranking = data.ranking_descending();
  const int Q = cfg.num_candidates;
  const Eigen::Index d = data.dim();

  double y_star = 0.0;
  if (cfg.oracle_best) {
    y_star = *cfg.oracle_best;
  } else {
    y_star = normalization.normalize(data.scores[ranking.front()]);
  }

  CandidateSet out;
  out.seed_indices.assign(ranking.begin(), ranking.begin() + Q);
  out.conditions.resize(Q);
  out.target_scale = cfg.target_scale;
  out.guidance_weight = cfg.guidance_weight;
  out.oracle_best = y_star;

  Eigen::MatrixXd seeds(d, Q);
  for (int q = 0; q < Q; ++q) {
    const Eigen::Index row = out.seed_indices[q];
    seeds.col(q) = data.designs.row(row).transpose();
    out.conditions[q] = Condition{normalization.normalize(data.scores[row]), cfg.target_scale * y_star};
  }

  const RngStream master(cfg.seed);
  std::vector<RngStream> streams;
  streams.reserve(Q);
  for (int q = 0; q < Q; ++q) streams.push_back(master.child("candidate", static_cast<std::uint64_t>(q)));

  Eigen::MatrixXd x = seeds;
  for (int t = s.horizon; t >= 1; --t) {
    const Eigen::MatrixXd eps_hat =
        guided_noise_batch(net, x, static_cast<double>(t) / s.horizon, out.conditions, cfg.guidance_weight);
    Eigen::MatrixXd next = s.u[t] * x + s.v[t] * seeds + s.w[t] * eps_hat;
    if (t > 1) {
      const double sd = std::sqrt(s.kappa_tilde[t - 1]);
      for (int q = 0; q < Q; ++q) next.col(q) += sd * streams[q].normal_vector(d);
    }
    x = std::move(next);
    if (!x.allFinite()) {
      throw Error(ErrorCode::kNonFiniteIterate, "denoising diverged at step " + std::to_string(t));
    }
    ++out.denoise_steps_run;
  }
  out.designs = x.transpose();
  return out;
}

CandidateSet sample_candidates(const TrainedModel& model, const OfflineDataset& data,
                               const SampleConfig& cfg) {
  return sample_candidates(model.network, *model.schedule, model.normalization, data, cfg);
}

}  // namespace root_opt
