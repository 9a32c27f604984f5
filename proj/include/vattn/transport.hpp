#pragma once

// One-sided entropic optimal transport between n queries and m keys:
//
//   min_P  <P, C>_F + eps * sum_ij P_ij log P_ij   s.t. every row of P on the simplex
//
// with C_ij = -<q_i, k_j>. The problem separates by row, and the optimum is
// the softmax attention matrix at temperature eps. Throughout this module the
// regularization strength eps and the attention temperature tau are the same
// number.
//
// The row loops run under OpenMP; serial:: keeps the reference versions and
// the two produce bitwise-identical plans.

#include "vattn/core.hpp"
#include "vattn/oracle.hpp"

namespace vattn::transport {

/// C_ij = -<q_i, k_j>.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries);

  const Matrix& entries() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }

 private:
  Matrix entries_;
};

/// Nonnegative n x m matrix with every row summing to 1 within 1e-12.
class TransportPlan {
 public:
  explicit TransportPlan(Matrix entries);

  const Matrix& entries() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }
  SimplexDistribution row(Index i) const;
  /// max_i |sum_j P_ij - 1|
  double max_row_sum_error() const;

 private:
  Matrix entries_;
};

CostMatrix cost_matrix(const QueryKeyBatch& batch);

/// Row i = softmax(<q_i, k_1>, ..., <q_i, k_m>; tau).
TransportPlan attention_matrix(const QueryKeyBatch& batch, double tau);

/// <P, C>_F + eps * sum P log P (0 log 0 = 0).
double eot_matrix_objective(const TransportPlan& plan, const CostMatrix& cost, double epsilon);

/// Solves every row with the iterative oracle (never the closed form).
/// Throws ConvergenceFailure carrying the first failing row index.
TransportPlan solve_full_eot(const QueryKeyBatch& batch, double epsilon,
                             const oracle::SolverConfig& cfg = {});

/// Row i = sum_j P_ij v_j.
Matrix context(const TransportPlan& plan, const ValueSet& values);

namespace serial {
TransportPlan attention_matrix(const QueryKeyBatch& batch, double tau);
TransportPlan solve_full_eot(const QueryKeyBatch& batch, double epsilon,
                             const oracle::SolverConfig& cfg = {});
}  // namespace serial

}  // namespace vattn::transport
