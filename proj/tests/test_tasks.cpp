#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>

#include "root_opt/tasks.hpp"

using namespace root_opt;

namespace {

// Coarse grid, then repeated 10x zoom around the best cells.
double zoom_grid_max(const Task& task) {
  const int n = 201;
  std::vector<std::pair<double, Eigen::Vector2d>> cells;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d p(i / (n - 1.0), j / (n - 1.0));
      cells.push_back({task.oracle(p), p});
    }
  std::partial_sort(cells.begin(), cells.begin() + 20, cells.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  double best = cells.front().first;
  for (int c = 0; c < 20; ++c) {
    Eigen::Vector2d centre = cells[static_cast<std::size_t>(c)].second;
    double h = 1.0 / (n - 1);
    for (int level = 0; level < 4; ++level) {
      const double step = h / 10.0;
      Eigen::Vector2d arg = centre;
      double local = -INFINITY;
      for (int i = -10; i <= 10; ++i)
        for (int j = -10; j <= 10; ++j) {
          const Eigen::Vector2d p = (centre + Eigen::Vector2d(i * step, j * step)).cwiseMax(0.0).cwiseMin(1.0);
          const double v = task.oracle(p);
          if (v > local) local = v, arg = p;
        }
      centre = arg;
      best = std::max(best, local);
      h = step;
    }
  }
  return best;
}

double counting_percentile(const std::vector<double>& v, double q) {
  const double need = q / 100.0 * static_cast<double>(v.size());
  double answer = INFINITY;
  for (double c : v) {
    const auto below = std::count_if(v.begin(), v.end(), [&](double x) { return x <= c; });
    if (static_cast<double>(below) >= need - 1e-12) answer = std::min(answer, c);
  }
  return answer;
}

CandidateSet as_candidates(const Eigen::MatrixXd& X) {
  CandidateSet c;
  c.designs = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) c.seed_indices.push_back(i);
  return c;
}

}  // namespace

TEST_CASE("neg-ackley optimum") {
  for (int d : {1, 2, 5}) {
    const auto t = make_task("neg-ackley", d, 0);
    CHECK(std::abs(t.known_best) <= 1e-12);
    CHECK(std::abs(t.oracle(Eigen::VectorXd::Zero(d))) <= 1e-9);
    CHECK(t.known_worst < t.known_best);
  }
}

TEST_CASE("neg-ackley worst point is not beaten by random probes") {
  const auto t = make_task("neg-ackley", 2, 0);
  RngStream rng(1);
  for (int i = 0; i < 100000; ++i) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-5, 5), rng.uniform(-5, 5);
    CHECK_FALSE(t.oracle(x) < t.known_worst - 1e-9);
  }
}

TEST_CASE("neg-styblinski optimum") {
  const auto t = make_task("neg-styblinski", 3, 0);
  CHECK(std::abs(t.oracle(t.best_design) - t.known_best) <= 1e-9);
  CHECK(t.known_best == doctest::Approx(39.16616570377142 * 3).epsilon(1e-12));
  CHECK(t.known_worst == doctest::Approx(-375.0));
  Eigen::VectorXd g(3);
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd p = t.best_design, m = t.best_design;
    p[k] += 1e-5;
    m[k] -= 1e-5;
    g[k] = (t.oracle(p) - t.oracle(m)) / 2e-5;
  }
  CHECK(g.norm() <= 1e-6);
}

TEST_CASE("onehot-additive with unit weights") {
  TaskOptions opt;
  opt.onehot_weights = Eigen::MatrixXd::Ones(8, 4);
  const auto t = make_task("onehot-additive", 0, 3, opt);
  CHECK(t.dim == 32);
  CHECK(t.known_best == 8.0);
  CHECK(t.kind == InputKind::kDiscrete);
}

TEST_CASE("onehot-additive best is the per-position maximum") {
  const auto t = make_task("onehot-additive", 0, 9);
  CHECK(std::abs(t.oracle(t.best_design) - t.known_best) <= 1e-9);
  // Exhaustive check on a smaller alphabet.
  TaskOptions small;
  small.sequence_length = 4;
  small.alphabet_size = 3;
  const auto s = make_task("onehot-additive", 0, 10, small);
  double best = -INFINITY, worst = INFINITY;
  for (int code = 0; code < 81; ++code) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
    int c = code;
    for (int p = 0; p < 4; ++p, c /= 3) x[p * 3 + c % 3] = 1.0;
    best = std::max(best, s.oracle(x));
    worst = std::min(worst, s.oracle(x));
  }
  CHECK(best == doctest::Approx(s.known_best).epsilon(1e-14));
  CHECK(worst == doctest::Approx(s.known_worst).epsilon(1e-14));
}

TEST_CASE("gp-landscape maximum agrees with a refined grid") {
  const auto t = make_task("gp-landscape", 2, 42);
  const double refined = zoom_grid_max(t);
  CHECK(std::abs(refined - t.known_best) <= 1e-3);
  CHECK(refined <= t.known_best + 1e-9);
  CHECK(std::abs(t.oracle(t.best_design) - t.known_best) <= 1e-9);
  CHECK(make_task("gp-landscape", 2, 42).known_best == t.known_best);
}

TEST_CASE("unknown task") {
  CHECK(testing::code_of([] { make_task("rosenbrock", 2, 0); }) == ErrorCode::kUnknownTask);
}

TEST_CASE("decoding one-hot designs") {
  Eigen::VectorXd x(6);
  x << 0.2, 0.9, 0.1, 0.5, 0.5, -1.0;
  Eigen::VectorXd want(6);
  want << 0, 1, 0, 1, 0, 0;
  const auto dec = decode_onehot(x, 2, 3);
  CHECK(dec == want);
  CHECK(decode_onehot(dec, 2, 3) == dec);
  CHECK(is_valid_onehot(dec, 2, 3));
  CHECK_FALSE(is_valid_onehot(x, 2, 3));
  RngStream rng(2);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd r = rng.normal_vector(32);
    const auto d = decode_onehot(r, 8, 4);
    CHECK(is_valid_onehot(d, 8, 4));
    CHECK(decode_onehot(d, 8, 4) == d);
  }
}

TEST_CASE("full coverage is a plain uniform sample") {
  const auto t = make_task("neg-ackley", 2, 0);
  const auto data = build_offline_dataset(t, 2000, 100.0, 4);
  CHECK(data.size() == 2000);
  CHECK((data.designs.array() >= -5).all());
  CHECK((data.designs.array() <= 5).all());
  // Uniform on [-5, 5]: mean 0, variance 25/3.
  CHECK(std::abs(data.designs.col(0).mean()) <= 4 * std::sqrt(25.0 / 3 / 2000));
  for (Eigen::Index i = 0; i < 2000; ++i) CHECK(data.scores[i] == t.oracle(data.designs.row(i).transpose()));
}

TEST_CASE("half coverage keeps only the lower half of the pool") {
  const auto t = make_task("neg-ackley", 2, 0);
  const int n = 5000;
  const auto data = build_offline_dataset(t, n, 50.0, 5);
  // Same seed and pool size 2n at full coverage draws the identical pool.
  CHECK(data.size() == n);
  const auto full = build_offline_dataset(t, 2 * n, 100.0, 5);
  std::vector<double> pool(full.scores.begin(), full.scores.end());
  std::sort(pool.begin(), pool.end());
  CHECK(data.scores.maxCoeff() <= pool[static_cast<std::size_t>(n - 1)]);
  CHECK(t.known_best - data.scores.maxCoeff() > 0.0);
}

TEST_CASE("dataset normalization modes and round trip") {
  const auto t = make_task("neg-styblinski", 2, 0);
  const auto a = build_offline_dataset(t, 100, 100.0, 6);
  CHECK(a.normalization.mode == NormalizationMode::kOracleRange);
  CHECK(a.normalization.normalize(t.known_best) == doctest::Approx(1.0));
  CHECK(a.normalization.normalize(t.known_worst) == doctest::Approx(0.0));
  DatasetOptions opt;
  opt.oracle_range_normalization = false;
  const auto b = build_offline_dataset(t, 100, 100.0, 6, opt);
  CHECK(b.normalization.mode == NormalizationMode::kDatasetRange);
  CHECK(b.normalized_scores().maxCoeff() == doctest::Approx(1.0));
  for (double y : {-3.0, 0.0, 12.5, 1e4})
    CHECK(std::abs(a.normalization.denormalize(a.normalization.normalize(y)) - y) <= 1e-12 * (1 + std::abs(y)));
  CHECK(testing::code_of([&] { build_offline_dataset(t, 10, 0.0, 1); }) == ErrorCode::kInvalidCoverage);
  CHECK(testing::code_of([&] { build_offline_dataset(t, 10, 101.0, 1); }) == ErrorCode::kInvalidCoverage);
}

TEST_CASE("score noise perturbs stored scores only") {
  const auto t = make_task("neg-ackley", 2, 0);
  DatasetOptions opt;
  opt.score_noise_std = 0.1;
  const auto a = build_offline_dataset(t, 500, 100.0, 7);
  const auto b = build_offline_dataset(t, 500, 100.0, 7, opt);
  CHECK(a.designs == b.designs);
  CHECK(a.scores != b.scores);
}

TEST_CASE("nearest-rank percentiles agree with a counting oracle") {
  RngStream rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int Q = trial == 0 ? 128 : static_cast<int>(rng.uniform_int(1, 300));
    std::vector<double> v(static_cast<std::size_t>(Q));
    for (auto& x : v) x = std::round(rng.normal() * 4) / 4;  // ties on purpose
    for (double q : {50.0, 80.0, 100.0}) CHECK(nearest_rank_percentile(v, q) == counting_percentile(v, q));
  }
  std::vector<double> ramp(128);
  for (int i = 0; i < 128; ++i) ramp[static_cast<std::size_t>(i)] = i;
  CHECK(nearest_rank_percentile(ramp, 80) == 102.0);
  CHECK(nearest_rank_percentile(ramp, 50) == 63.0);
  CHECK(nearest_rank_percentile(ramp, 100) == 127.0);
}

TEST_CASE("evaluation report") {
  const auto t = make_task("neg-ackley", 2, 0);
  const auto data = build_offline_dataset(t, 300, 100.0, 9);
  RngStream rng(10);
  const Eigen::MatrixXd X = testing::random_matrix(rng, 128, 2, 3.0);
  const auto r = evaluate(t, as_candidates(X), data);
  CHECK(r.percentiles.p100 == r.oracle_scores.maxCoeff());
  CHECK(r.percentiles.p50 <= r.percentiles.p80);
  CHECK(r.percentiles.p80 <= r.percentiles.p100);
  CHECK(r.offline_best == data.scores.maxCoeff());
  CHECK(r.valid_fraction == 1.0);
  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(10, 2, 0.7);
  const auto s = evaluate(t, as_candidates(same), data);
  CHECK(s.percentiles.p50 == s.percentiles.p100);
  CHECK(s.percentiles.p80 == s.percentiles.p100);
}

TEST_CASE("continuous candidates are clamped to the box before scoring") {
  const auto t = make_task("neg-styblinski", 2, 0);
  const auto data = build_offline_dataset(t, 50, 100.0, 11);
  Eigen::MatrixXd X(1, 2);
  X << 9.0, -9.0;
  const auto r = evaluate(t, as_candidates(X), data);
  CHECK(r.evaluated_designs(0, 0) == 5.0);
  CHECK(r.evaluated_designs(0, 1) == -5.0);
}

TEST_CASE("discrete candidates are decoded before scoring") {
  const auto t = make_task("onehot-additive", 0, 12);
  const auto data = build_offline_dataset(t, 50, 100.0, 12);
  CHECK(data.designs.rowwise().sum().isApproxToConstant(8.0));
  RngStream rng(13);
  const Eigen::MatrixXd X = testing::random_matrix(rng, 16, 32);
  const auto r = evaluate(t, as_candidates(X), data);
  CHECK(r.valid_fraction == 1.0);
  for (int i = 0; i < 16; ++i)
    CHECK(r.oracle_scores[i] == t.oracle(decode_onehot(X.row(i).transpose(), 8, 4)));
}
