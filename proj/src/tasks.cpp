#include "root_opt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "root_opt/error.hpp"
#include "root_opt/gp_posterior.hpp"
#include "root_opt/rng.hpp"

namespace root_opt {

namespace {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Projected gradient ascent with step halving; never decreases f.
Eigen::VectorXd polish(const Objective& f, const Gradient& grad, Eigen::VectorXd x, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, double sign) {
  double fx = sign * f(x);
  double step = 1e-2;
  for (int it = 0; it < 2000 && step > 1e-14; ++it) {
    const Eigen::VectorXd cand = clamp_box(x + step * sign * grad(x), lo, hi);
    const double fc = sign * f(cand);
    if (fc > fx) {
      x = cand;
      fx = fc;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  return x;
}

struct Extremum {
  Eigen::VectorXd x;
  double value = 0.0;
};

// sign = +1 locates the maximum, -1 the minimum.
Extremum locate_extremum(const GpPosteriorMean& gp, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         double sign, RngStream& rng) {
  const int d = static_cast<int>(lo.size());
  std::vector<Eigen::VectorXd> starts;
  if (d <= 3) {
    const int per_axis = d == 1 ? 2001 : d == 2 ? 201 : 41;
    Eigen::Index total = 1;
    for (int k = 0; k < d; ++k) total *= per_axis;
    Eigen::MatrixXd grid(total, d);
    for (Eigen::Index i = 0; i < total; ++i) {
      Eigen::Index r = i;
      for (int k = 0; k < d; ++k) {
        const double frac = static_cast<double>(r % per_axis) / (per_axis - 1);
        grid(i, k) = lo[k] + frac * (hi[k] - lo[k]);
        r /= per_axis;
      }
    }
    const Eigen::VectorXd values = sign * gp.mean_batch(grid);
    Eigen::Index best = 0;
    values.maxCoeff(&best);
    starts.push_back(grid.row(best).transpose());
  } else {
    for (Eigen::Index i = 0; i < gp.train_inputs().rows(); ++i) {
      starts.push_back(clamp_box(gp.train_inputs().row(i).transpose(), lo, hi));
    }
    for (int i = 0; i < 256; ++i) {
      Eigen::VectorXd x(d);
      for (int k = 0; k < d; ++k) x[k] = rng.uniform(lo[k], hi[k]);
      starts.push_back(x);
    }
  }
  const Objective f = [&](const Eigen::VectorXd& x) { return gp.mean(x); };
  const Gradient g = [&](const Eigen::VectorXd& x) { return gp.gradient(x); };
  Extremum best{starts.front(), f(starts.front())};
  for (const auto& s : starts) {
    const Eigen::VectorXd x = polish(f, g, s, lo, hi, sign);
    const double v = f(x);
    if (sign * v > sign * best.value) best = {x, v};
  }
  return best;
}

Task make_gp_landscape(int dim, std::uint64_t seed, const TaskOptions& opt) {
  if (opt.landscape_anchors < 1 || !(opt.landscape_lengthscale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gp-landscape needs anchors >= 1 and a positive lengthscale");
  }
  RngStream rng = RngStream(seed).child("gp-landscape");
  const int n = opt.landscape_anchors;
  Eigen::MatrixXd anchors(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) anchors(i, k) = rng.uniform(0.0, 1.0);
  }
  const KernelConfig kernel{opt.landscape_lengthscale, 1.0, 0.0};
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      K(i, j) = rbf_kernel(kernel, anchors.row(i).transpose(), anchors.row(j).transpose());
    }
  }
  K.diagonal().array() += 1e-8;
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  const Eigen::VectorXd prior_draw = llt.matrixL() * rng.normal_vector(n);

  std::vector<Eigen::Index> all(n);
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  auto gp = std::make_shared<const GpPosteriorMean>(fit_posterior(anchors, prior_draw, all, kernel));

  Task task;
  task.name = "gp-landscape";
  task.dim = dim;
  task.lower = Eigen::VectorXd::Zero(dim);
  task.upper = Eigen::VectorXd::Ones(dim);
  task.oracle = [gp](const Eigen::VectorXd& x) { return gp->mean(x); };
  RngStream search = rng.child("search");
  const Extremum hi = locate_extremum(*gp, task.lower, task.upper, 1.0, search);
  const Extremum lo = locate_extremum(*gp, task.lower, task.upper, -1.0, search);
  task.known_best = hi.value;
  task.best_design = hi.x;
  task.known_worst = lo.value;
  return task;
}

double neg_ackley(const Eigen::VectorXd& x) {
  const double d = static_cast<double>(x.size());
  const double r = std::sqrt(x.squaredNorm() / d);
  const double c = (2.0 * std::numbers::pi * x.array()).cos().sum() / d;
  return 20.0 * std::exp(-0.2 * r) + std::exp(c) - 20.0 - std::numbers::e;
}

Task make_neg_ackley(int dim) {
  Task task;
  task.name = "neg-ackley";
  task.dim = dim;
  task.lower = Eigen::VectorXd::Constant(dim, -5.0);
  task.upper = Eigen::VectorXd::Constant(dim, 5.0);
  task.oracle = neg_ackley;
  task.best_design = Eigen::VectorXd::Zero(dim);
  task.known_best = neg_ackley(task.best_design);

  // Worst point: symmetric 1-D search along the diagonal, then coordinate sweeps.
  constexpr int kGrid = 20001;
  auto axis = [](int i) { return -5.0 + 10.0 * i / (kGrid - 1); };
  Eigen::VectorXd x(dim);
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(dim, axis(i));
    const double v = neg_ackley(p);
    if (v < worst) {
      worst = v;
      x = p;
    }
  }
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int k = 0; k < dim; ++k) {
      Eigen::VectorXd p = x;
      for (int i = 0; i < kGrid; ++i) {
        p[k] = axis(i);
        const double v = neg_ackley(p);
        if (v < worst) {
          worst = v;
          x[k] = p[k];
        }
      }
    }
  }
  task.known_worst = worst;
  return task;
}

double neg_styblinski(const Eigen::VectorXd& x) {
  const auto a = x.array();
  return -0.5 * (a.pow(4) - 16.0 * a.square() + 5.0 * a).sum();
}

Task make_neg_styblinski(int dim) {
  // Stationary point of x^4 - 16x^2 + 5x near -2.9035 by Newton's method.
  double r = -2.9;
  for (int i = 0; i < 50; ++i) r -= (4 * r * r * r - 32 * r + 5) / (12 * r * r - 32);
  Task task;
  task.name = "neg-styblinski";
  task.dim = dim;
  task.lower = Eigen::VectorXd::Constant(dim, -5.0);
  task.upper = Eigen::VectorXd::Constant(dim, 5.0);
  task.oracle = neg_styblinski;
  task.best_design = Eigen::VectorXd::Constant(dim, r);
  task.known_best = neg_styblinski(task.best_design);
  task.known_worst = neg_styblinski(Eigen::VectorXd::Constant(dim, 5.0));
  return task;
}

Task make_onehot_additive(std::uint64_t seed, const TaskOptions& opt) {
  const int L = opt.sequence_length;
  const int V = opt.alphabet_size;
  if (L < 1 || V < 2) throw Error(ErrorCode::kInvalidDimension, "onehot-additive needs L >= 1 and V >= 2");
  Eigen::MatrixXd weights(L, V);
  if (opt.onehot_weights) {
    weights = *opt.onehot_weights;
    if (weights.rows() != L || weights.cols() != V) {
      throw Error(ErrorCode::kShapeMismatch, "onehot weight override must be L x V");
    }
    if (!weights.allFinite() || (weights.array() <= 0.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "onehot weights must be finite and positive");
    }
  } else {
    RngStream rng = RngStream(seed).child("onehot-additive");
    for (int p = 0; p < L; ++p) {
      for (int v = 0; v < V; ++v) weights(p, v) = rng.uniform(0.1, 1.0);
    }
  }
  Task task;
  task.name = "onehot-additive";
  task.kind = InputKind::kDiscrete;
  task.dim = L * V;
  task.sequence_length = L;
  task.alphabet_size = V;
  task.lower = Eigen::VectorXd::Zero(task.dim);
  task.upper = Eigen::VectorXd::Ones(task.dim);
  task.oracle = [weights, L, V](const Eigen::VectorXd& x) {
    double total = 0.0;
    for (int p = 0; p < L; ++p) {
      Eigen::Index slot = 0;
      x.segment(p * V, V).maxCoeff(&slot);
      total += weights(p, slot);
    }
    return total;
  };
  task.best_design = Eigen::VectorXd::Zero(task.dim);
  for (int p = 0; p < L; ++p) {
    Eigen::Index slot = 0;
    task.known_best += weights.row(p).maxCoeff(&slot);
    task.best_design[p * V + slot] = 1.0;
    task.known_worst += weights.row(p).minCoeff();
  }
  return task;
}

}  // namespace

std::vector<std::string> task_names() {
  return {"gp-landscape", "neg-ackley", "neg-styblinski", "onehot-additive"};
}

Eigen::VectorXd Task::prepare(const Eigen::VectorXd& x) const {
  if (x.size() != dim) {
    throw Error(ErrorCode::kDimensionMismatch, "design has dimension " + std::to_string(x.size()) +
                                                   ", task expects " + std::to_string(dim));
  }
  if (kind == InputKind::kDiscrete) return decode_onehot(x, sequence_length, alphabet_size);
  return clamp_box(x, lower, upper);
}

Task make_task(std::string_view name, int dim, std::uint64_t seed, const TaskOptions& options) {
  Task task;
  if (name == "onehot-additive") {
    task = make_onehot_additive(seed, options);
  } else {
    if (name != "gp-landscape" && name != "neg-ackley" && name != "neg-styblinski") {
      throw Error(ErrorCode::kUnknownTask, "unknown task '" + std::string(name) + "'");
    }
    if (dim < 1) throw Error(ErrorCode::kInvalidDimension, "task dimension must be >= 1");
    if (name == "gp-landscape") task = make_gp_landscape(dim, seed, options);
    else if (name == "neg-ackley") task = make_neg_ackley(dim);
    else task = make_neg_styblinski(dim);
  }
  task.seed = seed;
  return task;
}

Eigen::VectorXd decode_onehot(const Eigen::VectorXd& x, int sequence_length, int alphabet_size) {
  if (x.size() != static_cast<Eigen::Index>(sequence_length) * alphabet_size) {
    throw Error(ErrorCode::kDimensionMismatch, "relaxed design does not have L*V entries");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (int p = 0; p < sequence_length; ++p) {
    const auto seg = x.segment(p * alphabet_size, alphabet_size);
    Eigen::Index slot = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < alphabet_size; ++v) {
      if (seg[v] > best) {  // strict: ties keep the first index
        best = seg[v];
        slot = v;
      }
    }
    out[p * alphabet_size + slot] = 1.0;
  }
  return out;
}

bool is_valid_onehot(const Eigen::VectorXd& x, int sequence_length, int alphabet_size) {
  if (x.size() != static_cast<Eigen::Index>(sequence_length) * alphabet_size) return false;
  for (int p = 0; p < sequence_length; ++p) {
    int ones = 0;
    for (int v = 0; v < alphabet_size; ++v) {
      const double e = x[p * alphabet_size + v];
      if (e == 1.0) ++ones;
      else if (e != 0.0) return false;
    }
    if (ones != 1) return false;
  }
  return true;
}

OfflineDataset build_offline_dataset(const Task& task, int n, double coverage_percent, std::uint64_t seed,
                                     const DatasetOptions& options) {
  if (!(coverage_percent > 0.0 && coverage_percent <= 100.0)) {
    throw Error(ErrorCode::kInvalidCoverage, "coverage must lie in (0, 100]");
  }
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "dataset size must be >= 1");
  if (!(options.score_noise_std >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "score noise must be >= 0");
  }
  RngStream rng = RngStream(seed).child("dataset");
  const auto pool_size =
      static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * 100.0 / coverage_percent - 1e-9));
  const Eigen::Index d = task.dim;
  Eigen::MatrixXd pool(pool_size, d);
  Eigen::VectorXd pool_scores(pool_size);
  for (Eigen::Index i = 0; i < pool_size; ++i) {
    Eigen::VectorXd x(d);
    if (task.kind == InputKind::kDiscrete) {
      x.setZero();
      for (int p = 0; p < task.sequence_length; ++p) {
        x[p * task.alphabet_size + rng.uniform_int(0, task.alphabet_size - 1)] = 1.0;
      }
    } else {
      for (Eigen::Index k = 0; k < d; ++k) x[k] = rng.uniform(task.lower[k], task.upper[k]);
    }
    pool.row(i) = x.transpose();
    pool_scores[i] = task.oracle(x);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return pool_scores[a] < pool_scores[b]; });
  auto keep = static_cast<Eigen::Index>(std::ceil(static_cast<double>(pool_size) * coverage_percent / 100.0 - 1e-9));
  keep = std::clamp<Eigen::Index>(keep, n, pool_size);
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n));
  std::sample(order.begin(), order.begin() + keep, std::back_inserter(chosen), n, rng.engine());
  std::shuffle(chosen.begin(), chosen.end(), rng.engine());

  OfflineDataset data;
  data.designs.resize(n, d);
  data.scores.resize(n);
  for (int i = 0; i < n; ++i) {
    data.designs.row(i) = pool.row(chosen[i]);
    data.scores[i] = pool_scores[chosen[i]];
    if (options.score_noise_std > 0.0) data.scores[i] += options.score_noise_std * rng.normal();
  }
  if (options.oracle_range_normalization && task.known_best > task.known_worst) {
    data.normalization =
        ScoreNormalization::from_range(task.known_worst, task.known_best, NormalizationMode::kOracleRange);
  } else {
    data.normalization = ScoreNormalization::from_range(data.scores.minCoeff(), data.scores.maxCoeff(),
                                                        NormalizationMode::kDatasetRange);
  }
  return data;
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of an empty set");
  if (!(q > 0.0 && q <= 100.0)) throw Error(ErrorCode::kInvalidRange, "percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto Q = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * Q - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

EvalReport evaluate(const Task& task, const CandidateSet& candidates, const OfflineDataset& data) {
  const Eigen::Index Q = candidates.size();
  if (Q < 1) throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one candidate");
  if (candidates.designs.cols() != task.dim || data.dim() != task.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "candidate, dataset and task dimensions differ");
  }
  if (data.size() == 0) throw Error(ErrorCode::kInsufficientData, "offline dataset is empty");
  EvalReport report;
  report.task = task.name;
  report.evaluated_designs.resize(Q, task.dim);
  report.oracle_scores.resize(Q);
  long valid = 0;
  for (Eigen::Index i = 0; i < Q; ++i) {
    const Eigen::VectorXd raw = candidates.designs.row(i).transpose();
    const Eigen::VectorXd x = task.prepare(raw);
    report.evaluated_designs.row(i) = x.transpose();
    report.oracle_scores[i] = task.oracle(x);
    bool ok = raw.allFinite();
    if (task.kind == InputKind::kDiscrete) ok = ok && is_valid_onehot(x, task.sequence_length, task.alphabet_size);
    valid += ok ? 1 : 0;
  }
  report.valid_fraction = static_cast<double>(valid) / static_cast<double>(Q);
  const std::vector<double> scores(report.oracle_scores.begin(), report.oracle_scores.end());
  report.percentiles = {nearest_rank_percentile(scores, 50), nearest_rank_percentile(scores, 80),
                        nearest_rank_percentile(scores, 100)};
  const auto& nz = data.normalization;
  report.normalized_scores = report.oracle_scores.unaryExpr([&](double y) { return nz.normalize(y); });
  report.normalized = {nz.normalize(report.percentiles.p50), nz.normalize(report.percentiles.p80),
                       nz.normalize(report.percentiles.p100)};
  report.offline_best = data.scores.maxCoeff();
  report.normalized_offline_best = nz.normalize(report.offline_best);
  return report;
}

}  // namespace root_opt
