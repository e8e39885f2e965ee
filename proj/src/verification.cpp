#include "root_opt/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "root_opt/bridge.hpp"
#include "root_opt/gp_posterior.hpp"
#include "root_opt/noise_model.hpp"
#include "root_opt/rng.hpp"
#include "root_opt/sampler.hpp"

namespace root_opt {

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& reference, double floor) {
  const double scale = reference.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double b = reference[i];
    const double denom = std::max({std::abs(a), std::abs(b), floor * scale, 1e-300});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

namespace {

CheckResult at_most(std::string name, double measured, double tolerance) {
  return {std::move(name), measured, tolerance, std::isfinite(measured) && measured <= tolerance};
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> v(static_cast<std::size_t>(hi - lo + 1));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

double noise_form_error(int T, double alpha) {
  const BridgeProcess p = ou_process(T, alpha);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  double worst = 0.0;
  for (int t = 1; t < T; ++t) {
    // eps = (x_t - a_t x0 - m_t xT) / sqrt(kappa_t)
    const auto c = ou_noise_form_coefficients(T, alpha, t);
    const double sd = std::sqrt(p.covariance(t, t));
    const double x0_coef = -c.w * p.source_weight(t) / sd;
    const double xT_coef = c.v - c.w * p.target_weight(t) / sd;
    const double xt_coef = c.u + c.w / sd;
    const double r0 = generic_backward_transition(p, one, zero, zero, t).mean[0];
    const double rT = generic_backward_transition(p, zero, one, zero, t).mean[0];
    const double rt = generic_backward_transition(p, zero, zero, one, t).mean[0];
    for (auto [a, b] : {std::pair{x0_coef, r0}, {xT_coef, rT}, {xt_coef, rt}}) {
      worst = std::max(worst, std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
    }
  }
  return worst;
}

double boundary_error() {
  double worst = 0.0;
  RngStream rng(7);
  const Eigen::VectorXd x0 = rng.normal_vector(3);
  const Eigen::VectorXd xT = rng.normal_vector(3);
  const Eigen::VectorXd eps = rng.normal_vector(3);
  for (const auto& s : {brownian_schedule(200), ou_schedule(200, 0.01)}) {
    worst = std::max(worst, (forward_sample(s, x0, xT, 0, eps) - x0).cwiseAbs().maxCoeff());
    worst = std::max(worst, (forward_sample(s, x0, xT, s.horizon, eps) - xT).cwiseAbs().maxCoeff());
    worst = std::max({worst, std::abs(s.kappa[0]), std::abs(s.kappa[s.horizon])});
  }
  return worst;
}

struct LimitError {
  double mean = 0.0;
  double variance = 0.0;
};

LimitError small_stiffness_error(int T, double alpha) {
  const BridgeSchedule s = ou_schedule(T, alpha);
  LimitError e;
  for (int t = 0; t <= T; ++t) {
    const double m = static_cast<double>(t) / T;
    e.mean = std::max({e.mean, std::abs(s.m[t] - m), std::abs(s.source_weight[t] - (1.0 - m))});
    const double var = static_cast<double>(t) * (T - t) / T;
    if (var > 0.0) e.variance = std::max(e.variance, std::abs(s.kappa[t] - var) / var);
  }
  return e;
}

double gp_gradient_error(RngStream& rng, int instances) {
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const int n = 12;
    const int d = 5;
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) X.row(i) = rng.normal_vector(d).transpose();
    const Eigen::VectorXd y = rng.normal_vector(n);
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const KernelConfig kernel{rng.uniform(0.75, 1.25), rng.uniform(0.75, 1.25), 1e-4};
    const GpPosteriorMean gp = fit_posterior(X, y, idx, kernel);
    const Eigen::VectorXd x = rng.normal_vector(d);
    const double h = 1e-4;
    Eigen::VectorXd fd(d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      fd[j] = (gp.mean(xp) - gp.mean(xm)) / (2 * h);
    }
    worst = std::max(worst, max_relative_error(gp.gradient(x), fd));
  }
  return worst;
}

double network_gradient_error(RngStream& rng, int instances) {
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const int d = 3;
    NoiseNetwork net = NoiseNetwork::initialize(d, 8, rng);
    // Larger output weights so every layer carries signal.
    net.parameters().layers.back().weight *= 100.0;
    const int B = 4;
    Eigen::MatrixXd inputs(d + kConditionWidth, B);
    for (int j = 0; j < B; ++j) {
      write_input_column(inputs.col(j), rng.normal_vector(d), rng.uniform(0, 1),
                         j % 2 ? std::optional<Condition>{} : Condition{rng.normal(), rng.normal()});
    }
    const Eigen::MatrixXd targets = Eigen::MatrixXd::NullaryExpr(d, B, [&] { return rng.normal(); });
    const LossAndGradients lg = loss_and_gradients(net, inputs, targets);
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.parameters().layers.size(); ++l) {
      auto& W = net.parameters().layers[l].weight;
      const auto& G = lg.gradients.layers[l].weight;
      Eigen::VectorXd fd(W.size()), an(W.size());
      for (Eigen::Index i = 0; i < W.size(); ++i) {
        const double saved = W.data()[i];
        W.data()[i] = saved + h;
        const double up = loss_and_gradients(net, inputs, targets).loss;
        W.data()[i] = saved - h;
        const double down = loss_and_gradients(net, inputs, targets).loss;
        W.data()[i] = saved;
        fd[i] = (up - down) / (2 * h);
        an[i] = G.data()[i];
      }
      worst = std::max(worst, max_relative_error(an, fd));
    }
  }
  return worst;
}

// Largest z-score of the composed backward-step moments against the marginal at t-1.
double marginal_consistency(const BridgeSchedule& s, std::span<const int> timesteps, int samples, RngStream& rng) {
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::VectorXd xT = Eigen::VectorXd::Constant(1, -0.7);
  double worst = 0.0;
  for (int t : timesteps) {
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < samples; ++i) {
      const Eigen::VectorXd eps = rng.normal_vector(1);
      const Eigen::VectorXd xt = forward_sample(s, x0, xT, t, eps);
      const Eigen::VectorXd target = xt - x0;
      const double next = backward_transition_mean(s, xt, xT, target, t)[0] +
                          std::sqrt(s.kappa_tilde[t - 1]) * rng.normal();
      sum += next;
      sum_sq += next * next;
    }
    const double mean = sum / samples;
    const double var = sum_sq / samples - mean * mean;
    const double psi = bridge_mean(s, x0, xT, t - 1)[0];
    const double kappa = s.kappa[t - 1];
    worst = std::max(worst, std::abs(mean - psi) / std::sqrt(kappa / samples));
    worst = std::max(worst, std::abs(var - kappa) / (kappa * std::sqrt(2.0 / samples)));
  }
  return worst;
}

double guidance_identity_error(RngStream& rng) {
  const int d = 4;
  const NoiseNetwork net = NoiseNetwork::initialize(d, 16, rng);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(d);
    const double tn = rng.uniform(0, 1);
    const Condition y{rng.normal(), rng.normal()};
    const Eigen::VectorXd cond = net.forward(x, tn, y);
    const Eigen::VectorXd uncond = net.forward(x, tn, std::nullopt);
    worst = std::max(worst, (guided_noise(net, x, tn, y, 0.0) - cond).cwiseAbs().maxCoeff());
    worst = std::max(worst, (guided_noise(net, x, tn, y, -1.0) - uncond).cwiseAbs().maxCoeff());
  }
  return worst;
}

double gp_dense_solve_error(RngStream& rng) {
  const int n = 20, d = 5;
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) X.row(i) = rng.normal_vector(d).transpose();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = X.row(i).squaredNorm() - X(i, 0);
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const KernelConfig kernel{1.0, 1.0, 1e-4};
  const GpPosteriorMean gp = fit_posterior(X, y, idx, kernel);
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K(i, j) = rbf_kernel(kernel, X.row(i).transpose(), X.row(j).transpose());
  const Eigen::MatrixXd A = K + kernel.noise_variance * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd alpha = A.fullPivLu().solve(y);
  const Eigen::VectorXd ref = K * alpha;
  Eigen::VectorXd got(n);
  for (int i = 0; i < n; ++i) got[i] = gp.mean(X.row(i).transpose());
  return max_relative_error(got, ref, 0.0);
}

}  // namespace

VerifyReport verify(const VerifyOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  VerifyReport report;
  RngStream rng(options.seed);

  BridgeSchedule brownian = brownian_schedule(200);
  if (options.tamper_u != 0.0) brownian.u.array() += options.tamper_u;
  const auto all_t = range(2, 200);
  const OracleCheck bc = check_against_oracle(brownian, all_t);
  report.checks.push_back(at_most("bridge.brownian_oracle_coefficients", bc.max_coefficient_error, 1e-10));
  report.checks.push_back(at_most("bridge.brownian_oracle_variance", bc.max_variance_error, 1e-10));

  const BridgeSchedule ou = ou_schedule(200, 0.01);
  const OracleCheck oc = check_against_oracle(ou, range(1, 200));
  report.checks.push_back(at_most("bridge.ou_oracle_coefficients", oc.max_coefficient_error, 1e-10));
  report.checks.push_back(at_most("bridge.ou_oracle_variance", oc.max_variance_error, 1e-10));
  report.checks.push_back(at_most("bridge.ou_noise_form_oracle", noise_form_error(200, 0.01), 1e-10));

  report.checks.push_back(at_most("bridge.boundary_pinning", boundary_error(), 0.0));
  const LimitError le = small_stiffness_error(20, 1e-4);
  report.checks.push_back(at_most("bridge.ou_small_stiffness_mean", le.mean, 1e-6));
  report.checks.push_back(at_most("bridge.ou_small_stiffness_variance", le.variance, 1e-4));

  const int mc_t[] = {2, 100, 200};
  report.checks.push_back(at_most("bridge.marginal_consistency_zscore",
                                  marginal_consistency(brownian, mc_t, options.monte_carlo_samples, rng), 4.0));

  report.checks.push_back(at_most("gp.dense_solve_agreement", gp_dense_solve_error(rng), 1e-8));
  report.checks.push_back(at_most("gp.gradient_vs_finite_differences", gp_gradient_error(rng, 100), 1e-5));
  report.checks.push_back(at_most("network.gradient_vs_finite_differences", network_gradient_error(rng, 10), 1e-4));
  report.checks.push_back(at_most("sampler.guidance_identities", guidance_identity_error(rng), 0.0));

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace root_opt
