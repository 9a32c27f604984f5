#include "vattn/random.hpp"

#include <cmath>
#include <numbers>

namespace vattn {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng Rng::for_stream(std::uint64_t seed, std::string_view name, std::uint64_t trial) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ fnv1a(name));
  return Rng(splitmix64(b ^ splitmix64(trial)));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

Index Rng::integer(Index lo, Index hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<Index>(x % span);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector Rng::uniform_vector(Index m, double lo, double hi) {
  Vector v(m);
  for (Index j = 0; j < m; ++j) v[j] = uniform(lo, hi);
  return v;
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) a(i, j) = normal();
  }
  return a;
}

SimplexDistribution Rng::dirichlet(Index m) {
  Vector e(m);
  for (Index j = 0; j < m; ++j) e[j] = -std::log(1.0 - uniform()) + 1e-300;
  e /= e.sum();
  return SimplexDistribution::renormalized(std::move(e));
}

}  // namespace vattn
