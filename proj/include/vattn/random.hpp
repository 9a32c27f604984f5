#pragma once

// Reproducible random instances for the verification suites.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard <random> distributions are not (their algorithms
// differ between library vendors), so every transform below is written out
// explicitly. Given a seed, reports are bit-identical across platforms that
// use IEEE-754 doubles and correctly rounded log/cos/sqrt.

#include <cstdint>
#include <random>
#include <string_view>

#include "vattn/core.hpp"

namespace vattn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, name, trial): splitmix64 over the seed,
  /// an FNV-1a hash of the name, and the trial index.
  static Rng for_stream(std::uint64_t seed, std::string_view name, std::uint64_t trial);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [lo, hi], by rejection.
  Index integer(Index lo, Index hi);
  /// Standard normal (Box-Muller, one draw per call).
  double normal();

  Vector uniform_vector(Index m, double lo, double hi);
  Matrix normal_matrix(Index rows, Index cols);
  /// Symmetric Dirichlet(1): normalized Exp(1) draws. Strictly positive.
  SimplexDistribution dirichlet(Index m);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vattn
