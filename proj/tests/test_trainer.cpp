#include "doctest.h"
#include "test_support.hpp"

#include <limits>

#include "root_opt/trainer.hpp"

using namespace root_opt;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.horizon = 20;
  cfg.hidden_width = 16;
  cfg.synthgen.points_per_function = 64;
  cfg.synthgen.functions_per_epoch = 2;
  cfg.seed = seed;
  return cfg;
}

// Predicts x_t - x0 for a known x0, which is the exact regression target.
class OracleStub final : public NoisePredictor {
 public:
  explicit OracleStub(Eigen::MatrixXd x0) : x0_(std::move(x0)) {}
  int design_dim() const override { return static_cast<int>(x0_.rows()); }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const override {
    return inputs.topRows(x0_.rows()) - x0_;
  }

 private:
  Eigen::MatrixXd x0_;
};

}  // namespace

TEST_CASE("training target examples") {
  const auto s = brownian_schedule(200);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.7);
  CHECK(training_target(s, x, x, 57, Eigen::VectorXd::Zero(2)).isZero(0.0));
  Eigen::VectorXd x0(2), xT(2), eps(2);
  x0 << 0.2, -1.0;
  xT << 1.5, 3.0;
  eps << 4.0, -4.0;
  CHECK(training_target(s, x0, xT, 200, eps) == (xT - x0).eval());
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b(2), e(2);
  b << 1, 0;
  e << 0, 1;
  const auto got = training_target(s, a, b, 100, e);
  CHECK(got[0] == 0.5);
  CHECK(got[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(testing::code_of([&] { training_target(s, a, b, 0, e); }) == ErrorCode::kTimestepOutOfRange);
}

TEST_CASE("a predictor that returns the true target has zero loss") {
  for (BridgeKind kind : {BridgeKind::kBrownian, BridgeKind::kOrnsteinUhlenbeck}) {
    const auto s = kind == BridgeKind::kBrownian ? brownian_schedule(50) : ou_schedule(50, 0.02);
    RngStream rng(1);
    const int n = 32, d = 3;
    Eigen::MatrixXd x0(d, n), inputs(d + kConditionWidth, n), targets(d, n);
    for (int j = 0; j < n; ++j) {
      x0.col(j) = rng.normal_vector(d);
      const Eigen::VectorXd xT = rng.normal_vector(d), eps = rng.normal_vector(d);
      const int t = static_cast<int>(rng.uniform_int(1, 50));
      write_input_column(inputs.col(j), forward_sample(s, x0.col(j), xT, t, eps), t / 50.0, std::nullopt);
      targets.col(j) = training_target(s, x0.col(j), xT, t, eps);
    }
    const OracleStub stub(x0);
    const double loss = (stub.predict(inputs) - targets).colwise().squaredNorm().mean();
    CHECK(loss <= 1e-28);
  }
}

TEST_CASE("dropout extremes") {
  const auto data = testing::toy_dataset(60, 2, 2);
  auto cfg = small_config(3);
  cfg.epochs = 1;
  cfg.cond_dropout = 1.0;
  auto all_null = train(data, cfg);
  CHECK(all_null.ledger.null_items == all_null.ledger.items_trained);
  cfg.cond_dropout = 0.0;
  auto none = train(data, cfg);
  CHECK(none.ledger.null_items == 0);
  CHECK(none.ledger.items_trained > 0);
}

TEST_CASE("dropout rate over 1e5 items") {
  const auto data = testing::toy_dataset(50, 2, 4);
  TrainConfig cfg = small_config(5);
  cfg.hidden_width = 4;
  cfg.synthgen.points_per_function = 1024;
  cfg.synthgen.functions_per_epoch = 8;
  cfg.synthgen.pair_threshold = 0.0;
  cfg.epochs = 13;
  const auto model = train(data, cfg);
  const double n = static_cast<double>(model.ledger.items_trained);
  REQUIRE(n >= 1e5);
  const double rate = model.ledger.null_items / n;
  CHECK(std::abs(rate - 0.15) <= 3 * std::sqrt(0.15 * 0.85 / n));
}

TEST_CASE("zero epochs returns the initialized network") {
  const auto data = testing::toy_dataset(30, 2, 6);
  auto cfg = small_config(7);
  cfg.epochs = 0;
  const auto model = train(data, cfg);
  RngStream init = RngStream(7).child("init");
  const auto fresh = NoiseNetwork::initialize(2, cfg.hidden_width, init);
  for (std::size_t l = 0; l < 4; ++l)
    CHECK(model.network.parameters().layers[l].weight == fresh.parameters().layers[l].weight);
  CHECK(model.ledger.warnings.size() == 1);
  CHECK(model.ledger.kernel_configs_drawn == 0);
}

TEST_CASE("ledger counts what was consumed") {
  const auto data = testing::toy_dataset(80, 2, 8);
  auto cfg = small_config(9);
  cfg.batch_size = 50;
  std::vector<EpochStats> seen;
  const auto model = train(data, cfg, [&](const EpochStats& s) { seen.push_back(s); });
  REQUIRE(seen.size() == 3);
  CHECK(model.ledger.kernel_configs_drawn == 6);
  CHECK(model.ledger.epochs_completed == 3);
  CHECK(model.ledger.max_batch_size == 50);
  long steps = 0, items = 0;
  for (const auto& s : seen) {
    CHECK(s.pairs_total == 128);
    CHECK(s.items == s.pairs_kept);
    CHECK(s.steps == (s.pairs_kept + 49) / 50);
    CHECK(s.retention_rate() <= 1.0);
    steps += s.steps;
    items += s.items;
  }
  CHECK(model.ledger.optimizer_steps == steps);
  CHECK(model.ledger.items_trained == items);
  CHECK(model.schedule->horizon == 20);
  CHECK(model.fingerprint == hex_fingerprint(cfg.describe()));
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const auto data = testing::toy_dataset(60, 2, 10);
  const auto cfg = small_config(11);
  std::vector<double> la, lb;
  const auto a = train(data, cfg, [&](const EpochStats& s) { la.push_back(s.mean_loss); });
  const auto b = train(data, cfg, [&](const EpochStats& s) { lb.push_back(s.mean_loss); });
  CHECK(la == lb);
  for (std::size_t l = 0; l < 4; ++l)
    CHECK(a.network.parameters().layers[l].weight == b.network.parameters().layers[l].weight);
  auto other = cfg;
  other.seed = 12;
  CHECK(train(data, other).network.parameters().layers[0].weight != a.network.parameters().layers[0].weight);
}

TEST_CASE("loss falls between the first and tenth epoch") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = testing::toy_dataset(200, 2, 20 + seed);
    auto cfg = small_config(seed);
    cfg.epochs = 10;
    cfg.hidden_width = 64;
    cfg.horizon = 200;
    cfg.synthgen.points_per_function = 256;
    cfg.synthgen.functions_per_epoch = 4;
    std::vector<double> losses;
    train(data, cfg, [&](const EpochStats& s) { losses.push_back(s.mean_loss); });
    CHECK_MESSAGE(losses.back() < losses.front(), "seed " << seed);
  }
}

TEST_CASE("trainer errors") {
  const auto data = testing::toy_dataset(30, 2, 13);
  auto cfg = small_config(14);
  cfg.synthgen.pair_threshold = std::numeric_limits<double>::infinity();
  CHECK(testing::code_of([&] { train(data, cfg); }) == ErrorCode::kEmptySyntheticData);
  cfg = small_config(14);
  cfg.cond_dropout = 1.5;
  CHECK(testing::code_of([&] { train(data, cfg); }) == ErrorCode::kInvalidRange);
  cfg = small_config(14);
  cfg.horizon = 1;
  CHECK(testing::code_of([&] { train(data, cfg); }) == ErrorCode::kInvalidHorizon);
}

TEST_CASE("ou bridge trains") {
  const auto data = testing::toy_dataset(60, 2, 15);
  auto cfg = small_config(16);
  cfg.bridge_kind = BridgeKind::kOrnsteinUhlenbeck;
  cfg.ou_stiffness = 0.01;
  const auto model = train(data, cfg);
  CHECK(model.schedule->kind == BridgeKind::kOrnsteinUhlenbeck);
  CHECK(model.ledger.epochs_completed == 3);
}
