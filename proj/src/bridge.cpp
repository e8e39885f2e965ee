#include "root_opt/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "root_opt/error.hpp"

namespace root_opt {

std::string_view to_string(BridgeKind kind) {
  return kind == BridgeKind::kBrownian ? "brownian" : "ornstein_uhlenbeck";
}

BridgeKind bridge_kind_from_string(std::string_view name) {
  if (name == "brownian") return BridgeKind::kBrownian;
  if (name == "ornstein_uhlenbeck" || name == "ou") return BridgeKind::kOrnsteinUhlenbeck;
  throw Error(ErrorCode::kInvalidArgument, "unknown bridge kind '" + std::string(name) + "'");
}

namespace {

void check_horizon(int horizon) {
  if (horizon < 2) {
    throw Error(ErrorCode::kInvalidHorizon, "bridge horizon must be >= 2, got " + std::to_string(horizon));
  }
}

void check_timestep(const BridgeSchedule& s, int t, int lo) {
  if (t < lo || t > s.horizon) {
    throw Error(ErrorCode::kTimestepOutOfRange,
                "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                    std::to_string(s.horizon) + "]");
  }
}

void check_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "vectors of dimension " + std::to_string(a.size()) +
                                                   " and " + std::to_string(b.size()));
  }
}

BridgeSchedule allocate(int horizon, BridgeKind kind, double stiffness) {
  BridgeSchedule s;
  s.horizon = horizon;
  s.kind = kind;
  s.ou_stiffness = stiffness;
  const Eigen::Index n = horizon + 1;
  s.source_weight = Eigen::VectorXd::Zero(n);
  s.m = Eigen::VectorXd::Zero(n);
  s.kappa = Eigen::VectorXd::Zero(n);
  s.u = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  s.w = Eigen::VectorXd::Zero(n);
  s.kappa_tilde = Eigen::VectorXd::Zero(n);
  return s;
}

// Conditioning written with the cancelled ratio r = kappa(t-1,t) / kappa(t,t),
// which stays finite where kappa(t,t) vanishes. Fills step t of the schedule
// for the residual target x_t - x0.
void fill_from_ratio(BridgeSchedule& s, int t, double ratio, double cross_cov) {
  const double a_prev = s.source_weight[t - 1];
  const double b_prev = s.m[t - 1];
  s.u[t] = a_prev + ratio * (1.0 - s.source_weight[t]);
  s.v[t] = b_prev - ratio * s.m[t];
  s.w[t] = ratio * s.source_weight[t] - a_prev;
  s.kappa_tilde[t - 1] = std::max(0.0, s.kappa[t - 1] - ratio * cross_cov);
}

}  // namespace

BridgeSchedule brownian_schedule(int horizon) {
  check_horizon(horizon);
  BridgeSchedule s = allocate(horizon, BridgeKind::kBrownian, 0.0);
  const double T = horizon;
  for (int t = 0; t <= horizon; ++t) {
    const double mt = t / T;
    s.m[t] = mt;
    s.source_weight[t] = 1.0 - mt;
    s.kappa[t] = 2.0 * (mt - mt * mt);
  }
  s.kappa[0] = 0.0;
  s.kappa[horizon] = 0.0;

  for (int t = 1; t < horizon; ++t) {
    const double kt = s.kappa[t];
    const double kp = s.kappa[t - 1];
    const double mt = s.m[t];
    const double mp = s.m[t - 1];
    const double ratio = (1.0 - mt) / (1.0 - mp);
    const double step_var = kt - kp * ratio * ratio;  // delta_{t|t-1}
    s.u[t] = kp / kt * ratio + step_var / kt * (1.0 - mp);
    s.v[t] = mp - mt * ratio * kp / kt;
    s.w[t] = -(1.0 - mp) * step_var / kt;
    s.kappa_tilde[t - 1] = step_var * kp / kt;
  }
  // kappa_T = 0: use the cancelled ratio kappa(T-1,T)/kappa(T,T) = m_{T-1}/m_T.
  const double mp = s.m[horizon - 1];
  const double cross_cov = 2.0 * mp * (1.0 - s.m[horizon]);
  fill_from_ratio(s, horizon, mp / s.m[horizon], cross_cov);
  return s;
}

BridgeSchedule ou_schedule(int horizon, double stiffness) {
  check_horizon(horizon);
  if (!(stiffness > 0.0) || !std::isfinite(stiffness)) {
    throw Error(ErrorCode::kInvalidRange, "OU stiffness must be positive");
  }
  const double sinh_total = std::sinh(stiffness * horizon);
  if (!std::isfinite(sinh_total) || stiffness * horizon > 700.0) {
    throw Error(ErrorCode::kNumericalOverflow,
                "sinh(alpha * T) overflows; reduce the OU stiffness alpha");
  }
  BridgeSchedule s = allocate(horizon, BridgeKind::kOrnsteinUhlenbeck, stiffness);
  auto S = [&](double x) { return std::sinh(stiffness * x); };
  const double T = horizon;
  for (int t = 0; t <= horizon; ++t) {
    s.source_weight[t] = S(T - t) / sinh_total;
    s.m[t] = S(t) / sinh_total;
    s.kappa[t] = S(t) * S(T - t) / (stiffness * sinh_total);
  }
  s.source_weight[horizon] = 0.0;
  s.m[0] = 0.0;
  s.kappa[0] = 0.0;
  s.kappa[horizon] = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const double ratio = S(t - 1) / S(t);
    const double cross_cov = S(t - 1) * S(T - t) / (stiffness * sinh_total);
    fill_from_ratio(s, t, ratio, cross_cov);
  }
  const bool finite = s.source_weight.allFinite() && s.m.allFinite() && s.kappa.allFinite() &&
                      s.u.allFinite() && s.v.allFinite() && s.w.allFinite() &&
                      s.kappa_tilde.allFinite();
  if (!finite) {
    throw Error(ErrorCode::kNumericalOverflow, "OU schedule not finite; reduce the OU stiffness alpha");
  }
  return s;
}

std::shared_ptr<const BridgeSchedule> cached_schedule(BridgeKind kind, int horizon,
                                                      double stiffness) {
  using Key = std::tuple<int, int, std::uint64_t>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const BridgeSchedule>> cache;
  std::uint64_t bits = 0;
  if (kind == BridgeKind::kOrnsteinUhlenbeck) std::memcpy(&bits, &stiffness, sizeof bits);
  const Key key{static_cast<int>(kind), horizon, bits};
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto schedule = std::make_shared<const BridgeSchedule>(
      kind == BridgeKind::kBrownian ? brownian_schedule(horizon) : ou_schedule(horizon, stiffness));
  cache.emplace(key, schedule);
  return schedule;
}

Eigen::VectorXd bridge_mean(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& xT, int t) {
  check_timestep(s, t, 0);
  check_same_dim(x0, xT);
  return s.source_weight[t] * x0 + s.m[t] * xT;
}

Eigen::VectorXd forward_sample(const BridgeSchedule& s, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& xT, int t, const Eigen::VectorXd& eps) {
  check_timestep(s, t, 0);
  check_same_dim(x0, xT);
  check_same_dim(x0, eps);
  return s.source_weight[t] * x0 + s.m[t] * xT + std::sqrt(s.kappa[t]) * eps;
}

Eigen::VectorXd backward_transition_mean(const BridgeSchedule& s, const Eigen::VectorXd& xt,
                                         const Eigen::VectorXd& xT, const Eigen::VectorXd& eps_hat,
                                         int t) {
  check_timestep(s, t, 1);
  check_same_dim(xt, xT);
  check_same_dim(xt, eps_hat);
  return s.u[t] * xt + s.v[t] * xT + s.w[t] * eps_hat;
}

TransitionCoefficients ou_noise_form_coefficients(int horizon, double stiffness, int t) {
  check_horizon(horizon);
  if (t < 1 || t > horizon - 1) {
    throw Error(ErrorCode::kTimestepOutOfRange, "noise-form OU coefficients need 1 <= t <= T-1");
  }
  auto S = [&](double x) { return std::sinh(stiffness * x); };
  const double T = horizon;
  TransitionCoefficients c;
  c.u = S(T - t + 1) / S(T - t);
  c.v = S(t - 1) / S(T) - S(T - t + 1) * S(t) / (S(T) * S(T - t));
  c.w = std::sqrt(S(T - t) / (stiffness * S(T) * S(t))) * (S(t - 1) - S(t) * S(T - t + 1) / S(T - t));
  return c;
}

BridgeProcess brownian_process(int horizon) {
  check_horizon(horizon);
  const double T = horizon;
  BridgeProcess p;
  p.horizon = horizon;
  p.source_weight = [T](int t) { return 1.0 - t / T; };
  p.target_weight = [T](int t) { return t / T; };
  p.covariance = [T](int t, int k) {
    const double lo = std::min(t, k);
    const double hi = std::max(t, k);
    return 2.0 * (lo / T) * (1.0 - hi / T);
  };
  return p;
}

BridgeProcess ou_process(int horizon, double stiffness) {
  check_horizon(horizon);
  const double T = horizon;
  const double a = stiffness;
  BridgeProcess p;
  p.horizon = horizon;
  p.source_weight = [T, a](int t) { return std::sinh(a * (T - t)) / std::sinh(a * T); };
  p.target_weight = [T, a](int t) { return std::sinh(a * t) / std::sinh(a * T); };
  p.covariance = [T, a](int t, int k) {
    const double lo = std::min(t, k);
    const double hi = std::max(t, k);
    return std::sinh(a * lo) * std::sinh(a * (T - hi)) / (a * std::sinh(a * T));
  };
  return p;
}

BridgeProcess process_for(const BridgeSchedule& s) {
  return s.kind == BridgeKind::kBrownian ? brownian_process(s.horizon)
                                         : ou_process(s.horizon, s.ou_stiffness);
}

GaussianTransition generic_backward_transition(const BridgeProcess& process,
                                               const Eigen::VectorXd& x0,
                                               const Eigen::VectorXd& xT,
                                               const Eigen::VectorXd& xt, int t) {
  if (t < 1 || t > process.horizon) {
    throw Error(ErrorCode::kTimestepOutOfRange, "generic transition needs 1 <= t <= T");
  }
  check_same_dim(x0, xT);
  check_same_dim(x0, xt);
  auto psi = [&](int k) -> Eigen::VectorXd {
    return process.source_weight(k) * x0 + process.target_weight(k) * xT;
  };
  const double k_tt = process.covariance(t, t);
  const double k_pp = process.covariance(t - 1, t - 1);
  const double k_pt = process.covariance(t - 1, t);
  const Eigen::VectorXd psi_t = psi(t);

  GaussianTransition out;
  if (k_tt > 0.0) {
    out.mean = psi(t - 1) + (k_pt / k_tt) * (xt - psi_t);
    out.variance = k_pp - k_pt * k_pt / k_tt;
    return out;
  }
  if (k_tt == 0.0 && xt == psi_t) {
    out.mean = psi(t - 1);
    out.variance = k_pp;
    return out;
  }
  throw Error(ErrorCode::kSingularMarginal,
              "marginal variance at t=" + std::to_string(t) + " is zero and x_t is off the bridge mean");
}

namespace {

double coefficient_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

OracleCheck check_against_oracle(const BridgeSchedule& s, std::span<const int> timesteps) {
  const BridgeProcess process = process_for(s);
  OracleCheck result;
  auto record = [&](double coef_err, double var_err, int t) {
    if (coef_err > result.max_coefficient_error || var_err > result.max_variance_error) {
      result.worst_timestep = t;
    }
    result.max_coefficient_error = std::max(result.max_coefficient_error, coef_err);
    result.max_variance_error = std::max(result.max_variance_error, var_err);
  };
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);

  for (int t : timesteps) {
    check_timestep(s, t, 1);
    // The oracle mean is linear in (x0, xT, x_t); probe each coefficient. With
    // target = x_t - x0 the schedule's mean is (u + w) x_t + v xT - w x0.
    if (process.covariance(t, t) > 0.0) {
      const auto c0 = generic_backward_transition(process, one, zero, zero, t);
      const auto cT = generic_backward_transition(process, zero, one, zero, t);
      const auto ct = generic_backward_transition(process, zero, zero, one, t);
      const double err = std::max({coefficient_error(-s.w[t], c0.mean[0]),
                                   coefficient_error(s.v[t], cT.mean[0]),
                                   coefficient_error(s.u[t] + s.w[t], ct.mean[0])});
      record(err, relative_error(s.kappa_tilde[t - 1], c0.variance), t);
    } else {
      // x_t is pinned to psi_t, so only the combined x_T coefficient is identifiable.
      const Eigen::VectorXd xt_for_x0 = s.source_weight[t] * one;
      const auto c0 = generic_backward_transition(process, one, zero, xt_for_x0, t);
      const auto cT = generic_backward_transition(process, zero, one, s.m[t] * one, t);
      const double x0_coef = -s.w[t] + (s.u[t] + s.w[t]) * s.source_weight[t];
      const double xT_coef = s.v[t] + (s.u[t] + s.w[t]) * s.m[t];
      const double err = std::max(coefficient_error(x0_coef, c0.mean[0]),
                                  coefficient_error(xT_coef, cT.mean[0]));
      record(err, relative_error(s.kappa_tilde[t - 1], c0.variance), t);
    }
  }
  return result;
}

}  // namespace root_opt
