#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace root_opt {

enum class BridgeKind { kBrownian, kOrnsteinUhlenbeck };

std::string_view to_string(BridgeKind kind);
BridgeKind bridge_kind_from_string(std::string_view name);

// Per-timestep bridge quantities, all indexed by t in [0, T]:
//   psi_t(x0, xT) = source_weight[t] * x0 + m[t] * xT,   marginal variance kappa[t]
//   backward mean for step t -> t-1:  u[t] x_t + v[t] x_T + w[t] * target_t
//   backward variance for that step:  kappa_tilde[t - 1]
// where target_t = x_t - x0 is the quantity the noise network regresses
// (for the Brownian bridge this is m_t (x_T - x0) + sqrt(kappa_t) eps).
// Entries u[0], v[0], w[0] and kappa_tilde[T] are unused and set to zero.
struct BridgeSchedule {
  int horizon = 0;
  BridgeKind kind = BridgeKind::kBrownian;
  double ou_stiffness = 0.0;
  Eigen::VectorXd source_weight;
  Eigen::VectorXd m;
  Eigen::VectorXd kappa;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  Eigen::VectorXd w;
  Eigen::VectorXd kappa_tilde;
};

// Brownian bridge with kappa_t = 2 (m_t - m_t^2), m_t = t / T. Requires T >= 2.
BridgeSchedule brownian_schedule(int horizon);

// Ornstein-Uhlenbeck bridge with stiffness alpha > 0. Throws NumericalOverflow
// when sinh(alpha * T) is not representable.
BridgeSchedule ou_schedule(int horizon, double stiffness);

// Shared immutable schedule, built once per (kind, T, alpha).
std::shared_ptr<const BridgeSchedule> cached_schedule(BridgeKind kind, int horizon,
                                                      double stiffness = 0.0);

Eigen::VectorXd bridge_mean(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& xT, int t);

// x_t = psi_t(x0, xT) + sqrt(kappa_t) eps.
Eigen::VectorXd forward_sample(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& xT, int t, const Eigen::VectorXd& eps);

// u_t x_t + v_t x_T + w_t eps_hat, for 1 <= t <= T.
Eigen::VectorXd backward_transition_mean(const BridgeSchedule& s, const Eigen::VectorXd& xt,
                                         const Eigen::VectorXd& xT, const Eigen::VectorXd& eps_hat,
                                         int t);

// App. E coefficients of the OU bridge written against the raw noise eps_t
// (mean = u x_t + v x_T + w eps_t). Only finite for 1 <= t <= T - 1.
struct TransitionCoefficients {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;
};
TransitionCoefficients ou_noise_form_coefficients(int horizon, double stiffness, int t);

// ---------------------------------------------------------------------------
// Reference process for verification: mean weights and the full covariance
// kernel kappa(t, k), conditioned generically.

struct BridgeProcess {
  int horizon = 0;
  std::function<double(int)> source_weight;
  std::function<double(int)> target_weight;
  std::function<double(int, int)> covariance;
};

BridgeProcess brownian_process(int horizon);
BridgeProcess ou_process(int horizon, double stiffness);
BridgeProcess process_for(const BridgeSchedule& s);

struct GaussianTransition {
  Eigen::VectorXd mean;
  double variance = 0.0;
};

// q(x_{t-1} | x_t, x0, xT) by Gaussian conditioning:
//   mean = psi_{t-1} + k(t-1,t)/k(t,t) (x_t - psi_t)
//   var  = k(t-1,t-1) - k(t-1,t)^2 / k(t,t)
// When k(t,t) = 0 and x_t equals psi_t exactly the observation carries no
// information and the unconditioned marginal at t-1 is returned; otherwise a
// vanishing k(t,t) raises SingularMarginal.
GaussianTransition generic_backward_transition(const BridgeProcess& process,
                                               const Eigen::VectorXd& x0,
                                               const Eigen::VectorXd& xT,
                                               const Eigen::VectorXd& xt, int t);

struct OracleCheck {
  double max_coefficient_error = 0.0;
  double max_variance_error = 0.0;
  int worst_timestep = 0;
  bool passed(double tolerance) const {
    return max_coefficient_error <= tolerance && max_variance_error <= tolerance;
  }
};

// Compares the schedule's (u, v, w, kappa_tilde) against the generic
// conditioning of process_for(s) at each listed timestep.
OracleCheck check_against_oracle(const BridgeSchedule& s, std::span<const int> timesteps);

}  // namespace root_opt
