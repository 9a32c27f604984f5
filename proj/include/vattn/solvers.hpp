#pragma once

// Closed-form minimizers of  -<p, s> + Omega(p)  over the probability simplex,
// one per regularizer kind, plus the log-sum-exp potential and the primal
// value function of the Shannon problem.

#include <optional>

#include "vattn/core.hpp"

namespace vattn::solvers {

struct SolveResult {
  SimplexDistribution distribution;
  /// Log-sum-exp potential; set only for the Shannon family.
  std::optional<double> potential;
  /// Count of strictly positive entries.
  Index support_size;
};

/// exp(s_j/tau) / sum_l exp(s_l/tau), max-shifted. potential = lse(s, tau).
SolveResult softmax(const Scores& s, double tau);

/// Euclidean projection of s onto the simplex (sort-and-threshold).
/// Entries outside the support are exactly 0.0.
SolveResult sparsemax(const Scores& s);

struct EntmaxThreshold {
  double theta;
  /// |sum_k [(alpha-1)(s_k - theta)]_+^{1/(alpha-1)} - 1| at the returned theta.
  double mass_residual;
  int iterations;
};

/// Bisection for the entmax threshold on [max(s) - 1/(alpha-1), max(s)].
/// Throws NumericalFailure if the residual is not below 1e-12 after 200 steps.
EntmaxThreshold entmax_threshold(const Scores& s, double alpha);

/// p_k = [(alpha-1)(s_k - theta)]_+^{1/(alpha-1)}; the Tsallis-regularized
/// minimizer. alpha = 2 is sparsemax; alpha -> 1 approaches softmax(s, 1).
SolveResult entmax(const Scores& s, double alpha);

/// softmax of s_j - gamma |i - j| (1-based positions) at temperature tau.
SolveResult alibi_softmax(const Scores& s, Index query_position, double gamma, double tau);

/// prior_j exp(s_j/tau) / normalizer, evaluated as softmax(s + tau log prior).
SolveResult prior_softmax(const Scores& s, const SimplexDistribution& prior, double tau);

/// tau log sum exp(s/tau), max-shifted.
double lse(const Scores& s, double tau);

/// Optimal value of the Shannon problem, evaluated on the softmax solution.
/// Equals -lse(s, tau) by strong duality.
double primal_value(const Scores& s, double tau);

/// Dispatch to the closed form for reg.kind().
SolveResult solve(const Scores& s, const RegularizerSpec& reg);

}  // namespace vattn::solvers
