#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace root_opt {

struct VerifyOptions {
  // Added to every u_t of the Brownian schedule under test (sensitivity hook).
  double tamper_u = 0.0;
  int monte_carlo_samples = 100000;
  std::uint64_t seed = 20240601;
};

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  bool all_passed() const;
};

VerifyReport verify(const VerifyOptions& options = {});

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor * max_j |b_j|, 1e-300)
double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& reference,
                          double floor = 1e-4);

}  // namespace root_opt
