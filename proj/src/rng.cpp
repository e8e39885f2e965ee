#include "root_opt/rng.hpp"

namespace root_opt {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::child(std::uint64_t id) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(id + 0x632be59bd9b4e019ULL)));
}

RngStream RngStream::child(std::string_view tag, std::uint64_t id) const {
  return child(fnv1a64(tag) ^ splitmix64(id));
}

double RngStream::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double RngStream::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

bool RngStream::bernoulli(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(engine_);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

Eigen::VectorXd RngStream::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(engine_);
  return v;
}

}  // namespace root_opt
