#include "root_opt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "root_opt/error.hpp"
#include "root_opt/parallel.hpp"

namespace root_opt {

std::string_view to_string(StartPolicy policy) {
  switch (policy) {
    case StartPolicy::kHighest: return "highest";
    case StartPolicy::kRandom: return "random";
    case StartPolicy::kLowest: return "lowest";
  }
  return "highest";
}

StartPolicy start_policy_from_string(std::string_view name) {
  if (name == "highest") return StartPolicy::kHighest;
  if (name == "random") return StartPolicy::kRandom;
  if (name == "lowest") return StartPolicy::kLowest;
  throw Error(ErrorCode::kInvalidArgument, "unknown start policy '" + std::string(name) + "'");
}

SynthGenConfig SynthGenConfig::continuous_defaults() { return SynthGenConfig{}; }

SynthGenConfig SynthGenConfig::discrete_defaults() {
  SynthGenConfig cfg;
  cfg.base_lengthscale = 6.25;
  cfg.base_variance = 6.25;
  cfg.step_size = 0.05;
  return cfg;
}

void SynthGenConfig::validate() const {
  if (!(range_halfwidth >= 0.0) || !(base_lengthscale - range_halfwidth > 0.0) ||
      !(base_variance - range_halfwidth > 0.0)) {
    throw Error(ErrorCode::kInvalidRange,
                "kernel sampling ranges must stay positive (l0 - delta > 0, sigma0^2 - delta > 0)");
  }
  if (grad_steps < 1 || !(step_size > 0.0) || points_per_function < 1 || functions_per_epoch < 1 ||
      !(pair_threshold >= 0.0) || fit_cap < 1 || !(noise_variance >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthetic data generation config");
  }
}

void SyntheticPairBatch::append(const SyntheticPairBatch& other) {
  if (other.empty()) return;
  if (empty()) {
    const bool flag = empty_after_filter;
    *this = other;
    empty_after_filter = flag && other.empty_after_filter;
    return;
  }
  const Eigen::Index n = size();
  const Eigen::Index m = other.size();
  low_designs.conservativeResize(n + m, Eigen::NoChange);
  low_designs.bottomRows(m) = other.low_designs;
  high_designs.conservativeResize(n + m, Eigen::NoChange);
  high_designs.bottomRows(m) = other.high_designs;
  low_scores.conservativeResize(n + m);
  low_scores.tail(m) = other.low_scores;
  high_scores.conservativeResize(n + m);
  high_scores.tail(m) = other.high_scores;
  function_ids.insert(function_ids.end(), other.function_ids.begin(), other.function_ids.end());
  start_indices.insert(start_indices.end(), other.start_indices.begin(), other.start_indices.end());
  empty_after_filter = false;
}

SyntheticPairBatch SyntheticPairBatch::select_rows(const std::vector<Eigen::Index>& rows) const {
  SyntheticPairBatch out;
  const auto k = static_cast<Eigen::Index>(rows.size());
  out.low_designs.resize(k, low_designs.cols());
  out.high_designs.resize(k, high_designs.cols());
  out.low_scores.resize(k);
  out.high_scores.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.low_designs.row(i) = low_designs.row(r);
    out.high_designs.row(i) = high_designs.row(r);
    out.low_scores[i] = low_scores[r];
    out.high_scores[i] = high_scores[r];
    out.function_ids.push_back(function_ids[static_cast<std::size_t>(r)]);
    out.start_indices.push_back(start_indices[static_cast<std::size_t>(r)]);
  }
  return out;
}

KernelConfig sample_kernel_config(RngStream& rng, const SynthGenConfig& cfg) {
  if (!(cfg.range_halfwidth >= 0.0) || !(cfg.base_lengthscale - cfg.range_halfwidth > 0.0) ||
      !(cfg.base_variance - cfg.range_halfwidth > 0.0)) {
    throw Error(ErrorCode::kInvalidRange, "kernel sampling ranges must stay positive");
  }
  KernelConfig k;
  k.noise_variance = cfg.noise_variance;
  const double h = cfg.range_halfwidth;
  if (h == 0.0) {
    k.lengthscale = cfg.base_lengthscale;
    k.signal_variance = cfg.base_variance;
  } else {
    k.lengthscale = rng.uniform(cfg.base_lengthscale - h, cfg.base_lengthscale + h);
    k.signal_variance = rng.uniform(cfg.base_variance - h, cfg.base_variance + h);
  }
  return k;
}

Eigen::MatrixXd gradient_flow_batch(const GpPosteriorMean& gp, const Eigen::MatrixXd& starts,
                                    int steps, double step_size, FlowDirection direction,
                                    std::vector<bool>& diverged) {
  if (steps < 1 || !(step_size >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gradient flow needs steps >= 1 and step_size >= 0");
  }
  const double signed_step = direction == FlowDirection::kAscend ? step_size : -step_size;
  Eigen::MatrixXd x = starts;
  diverged.assign(static_cast<std::size_t>(x.rows()), false);
  std::vector<Eigen::Index> active(static_cast<std::size_t>(x.rows()));
  std::iota(active.begin(), active.end(), Eigen::Index{0});

  for (int m = 0; m < steps && !active.empty(); ++m) {
    const bool all_active = static_cast<Eigen::Index>(active.size()) == x.rows();
    Eigen::MatrixXd current = all_active ? x : x(active, Eigen::all);
    Eigen::MatrixXd next = current + signed_step * gp.gradient_batch(current);
    std::vector<Eigen::Index> still_active;
    still_active.reserve(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Eigen::Index row = active[i];
      if (next.row(static_cast<Eigen::Index>(i)).allFinite()) {
        x.row(row) = next.row(static_cast<Eigen::Index>(i));
        still_active.push_back(row);
      } else {
        diverged[static_cast<std::size_t>(row)] = true;
      }
    }
    active.swap(still_active);
  }
  return x;
}

Eigen::VectorXd gradient_flow(const GpPosteriorMean& gp, const Eigen::VectorXd& start, int steps,
                              double step_size, FlowDirection direction) {
  std::vector<bool> diverged;
  Eigen::MatrixXd out = gradient_flow_batch(gp, start.transpose(), steps, step_size, direction, diverged);
  if (diverged[0]) throw Error(ErrorCode::kNonFiniteIterate, "gradient flow diverged");
  return out.row(0).transpose();
}

std::vector<Eigen::Index> select_start_points(const OfflineDataset& data, int count,
                                              StartPolicy policy, RngStream& rng) {
  const Eigen::Index n = data.size();
  if (n == 0) throw Error(ErrorCode::kInsufficientData, "offline dataset is empty");
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(count));
  if (policy == StartPolicy::kRandom) {
    if (count <= n) {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), Eigen::Index{0});
      std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng.engine());
    } else {
      for (int i = 0; i < count; ++i) out.push_back(rng.uniform_int(0, n - 1));
    }
    return out;
  }
  std::vector<Eigen::Index> order = data.ranking_descending();
  if (policy == StartPolicy::kLowest) std::reverse(order.begin(), order.end());
  // Wraps around the ranking when more points are requested than exist.
  for (int i = 0; i < count; ++i) out.push_back(order[static_cast<std::size_t>(i % n)]);
  return out;
}

SyntheticPairBatch generate_function_batch(const OfflineDataset& data, const SynthGenConfig& cfg,
                                           RngStream rng, int function_id) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorCode::kInsufficientData, "offline dataset is empty");

  const KernelConfig kernel = sample_kernel_config(rng, cfg);

  const ScoreStandardization standardization = ScoreStandardization::fit(data.scores);
  const Eigen::VectorXd standardized =
      data.scores.unaryExpr([&](double y) { return standardization.standardize(y); });

  std::vector<Eigen::Index> fit_subset;
  if (data.size() > cfg.fit_cap) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(data.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    std::sample(all.begin(), all.end(), std::back_inserter(fit_subset), cfg.fit_cap, rng.engine());
  } else {
    fit_subset.resize(static_cast<std::size_t>(data.size()));
    std::iota(fit_subset.begin(), fit_subset.end(), Eigen::Index{0});
  }
  const GpPosteriorMean gp = fit_posterior(data.designs, standardized, fit_subset, kernel);

  const std::vector<Eigen::Index> starts =
      select_start_points(data, cfg.points_per_function, cfg.start_policy, rng);
  const Eigen::MatrixXd start_designs = data.designs(starts, Eigen::all);

  std::vector<bool> low_diverged;
  std::vector<bool> high_diverged;
  const Eigen::MatrixXd low = gradient_flow_batch(gp, start_designs, cfg.grad_steps, cfg.step_size,
                                                  FlowDirection::kDescend, low_diverged);
  const Eigen::MatrixXd high = gradient_flow_batch(gp, start_designs, cfg.grad_steps, cfg.step_size,
                                                   FlowDirection::kAscend, high_diverged);

  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (!low_diverged[i] && !high_diverged[i]) keep.push_back(static_cast<Eigen::Index>(i));
  }

  SyntheticPairBatch batch;
  batch.low_designs = low(keep, Eigen::all);
  batch.high_designs = high(keep, Eigen::all);
  batch.low_scores = gp.mean_batch(batch.low_designs);
  batch.high_scores = gp.mean_batch(batch.high_designs);
  batch.function_ids.assign(keep.size(), function_id);
  for (Eigen::Index k : keep) batch.start_indices.push_back(starts[static_cast<std::size_t>(k)]);

  return filter_pairs(batch, cfg.pair_threshold);
}

SyntheticPairBatch filter_pairs(const SyntheticPairBatch& batch, double tau) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (batch.high_scores[i] - batch.low_scores[i] >= tau) rows.push_back(i);
  }
  SyntheticPairBatch out = batch.select_rows(rows);
  out.empty_after_filter = batch.size() > 0 && rows.empty();
  return out;
}

SyntheticDataset generate_synthetic_dataset(const OfflineDataset& data, const SynthGenConfig& cfg,
                                            const RngStream& master, int first_function_id,
                                            int count) {
  std::vector<SyntheticPairBatch> batches(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    const int id = first_function_id + static_cast<int>(i);
    batches[i] = generate_function_batch(data, cfg, master.child("function", static_cast<std::uint64_t>(id)), id);
  });

  SyntheticDataset out;
  out.pairs.low_designs.resize(0, data.dim());
  out.pairs.high_designs.resize(0, data.dim());
  out.kernel_configs_drawn = count;
  out.pairs_total = static_cast<long>(count) * cfg.points_per_function;
  for (const auto& b : batches) out.pairs.append(b);
  return out;
}

}  // namespace root_opt
