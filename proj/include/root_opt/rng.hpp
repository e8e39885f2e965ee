#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace root_opt {

// Seeded random stream. Child streams are derived from the stream's seed (not
// from its consumption state), so child(k) is stable no matter how many draws
// the parent has made.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  RngStream child(std::uint64_t id) const;
  RngStream child(std::string_view tag, std::uint64_t id = 0) const;

  double uniform(double lo, double hi);
  double normal();
  bool bernoulli(double p);
  // Inclusive on both ends.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  Eigen::VectorXd normal_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace root_opt
