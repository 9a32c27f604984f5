#pragma once

// Iterative and brute-force minimizers of  -<p, s> + Omega(p)  on the simplex.
// They share no code with the closed forms in solvers.hpp (apart from the
// Euclidean projection used by projected gradient) and exist to certify them.

#include <vector>

#include "vattn/core.hpp"

namespace vattn::oracle {

enum class Method { ExponentiatedGradient, ProjectedGradient, GridSearch };

struct SolverConfig {
  int max_iterations = 50000;
  /// Convergence threshold on the sup-norm change between iterates.
  double tolerance = 1e-12;
  /// Initial step; adapted by backtracking.
  double step_size = 0.1;
  Method method = Method::ExponentiatedGradient;
  /// Subdivisions per axis when method == GridSearch.
  int grid_resolution = 2000;

  void validate() const;

  /// Exponentiated gradient for the Shannon family (interior optima) and
  /// for Tsallis with alpha < 2, whose curvature p^(alpha-2) blows up at the
  /// boundary and stalls a Euclidean step; projected gradient otherwise.
  static SolverConfig for_regularizer(const RegularizerSpec& reg);
};

struct OracleResult {
  SimplexDistribution distribution;
  double objective;
  int iterations;
  bool converged;
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> objective_history;
};

/// First-order solve from the uniform start. Returns converged = false if
/// max_iterations is exhausted; throws NumericalFailure on a NaN objective.
OracleResult minimize_on_simplex(const Scores& s, const RegularizerSpec& reg,
                                 const SolverConfig& cfg = {});

/// Exhaustive search over the barycentric grid {k / resolution} for m <= 3.
/// Ties resolve to the lexicographically smallest grid index. OpenMP-parallel
/// over the first coordinate; the result is identical to serial::.
OracleResult grid_search_simplex(const Scores& s, const RegularizerSpec& reg, int resolution);

/// sup_p { <p, s> - Omega(p) } via minimize_on_simplex. Throws
/// NumericalFailure if the inner solve does not converge.
double fenchel_conjugate(const RegularizerSpec& reg, const Scores& s,
                         const SolverConfig& cfg = {});

/// Euclidean projection onto the simplex.
Vector project_simplex(const Vector& x);

namespace serial {
OracleResult grid_search_simplex(const Scores& s, const RegularizerSpec& reg, int resolution);
}  // namespace serial

}  // namespace vattn::oracle
