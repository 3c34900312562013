#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "bnnp/types.hpp"

namespace bnnp {

// 64-bit FNV-1a; also used as a content hash for provenance.
std::uint64_t fnv1a64(std::string_view bytes);

// Seed of the stream named `label` under `root`. Streams with distinct labels
// are independent, so adding a consumer never perturbs the others.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  // Child stream derived from this stream's seed (not its current state).
  Rng split(std::string_view label) const { return Rng(derive_seed(seed_, label)); }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform_(engine_) < p; }

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace bnnp
