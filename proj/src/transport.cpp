#include "vattn/transport.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "vattn/solvers.hpp"

namespace vattn::transport {
namespace {

void require_positive(double eps, const char* name) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw InvalidArgument(std::string(name) + " must be a finite positive number");
  }
}

Vector score_row(const QueryKeyBatch& batch, Index i) {
  return batch.keys() * batch.queries().row(i).transpose();
}

void attention_row(const QueryKeyBatch& batch, double tau, Index i, Matrix& out) {
  out.row(i) = solvers::softmax(Scores(score_row(batch, i)), tau)
                   .distribution.weights()
                   .transpose();
}

// Returns false when the oracle fails to converge on this row.
bool eot_row(const QueryKeyBatch& batch, const RegularizerSpec& reg,
             const oracle::SolverConfig& cfg, Index i, Matrix& out) {
  const oracle::OracleResult r = oracle::minimize_on_simplex(Scores(score_row(batch, i)), reg, cfg);
  out.row(i) = r.distribution.weights().transpose();
  return r.converged;
}

[[noreturn]] void throw_row_failure(Index row) {
  throw ConvergenceFailure(static_cast<std::size_t>(row),
                           "solve_full_eot: oracle did not converge on row " +
                               std::to_string(row));
}

}  // namespace

CostMatrix::CostMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (!entries_.allFinite()) throw InvalidArgument("cost matrix has non-finite entries");
}

TransportPlan::TransportPlan(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw InvalidArgument("transport plan must be non-empty");
  }
  if (!entries_.allFinite() || (entries_.array() < 0.0).any()) {
    throw InvalidArgument("transport plan entries must be finite and nonnegative");
  }
  if (max_row_sum_error() > kSimplexTolerance) {
    throw InvalidArgument("transport plan is not row-stochastic");
  }
}

SimplexDistribution TransportPlan::row(Index i) const {
  return SimplexDistribution(entries_.row(i).transpose());
}

double TransportPlan::max_row_sum_error() const {
  return (entries_.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

CostMatrix cost_matrix(const QueryKeyBatch& batch) {
  return CostMatrix(-(batch.queries() * batch.keys().transpose()));
}

TransportPlan attention_matrix(const QueryKeyBatch& batch, double tau) {
  require_positive(tau, "temperature");
  const Index n = batch.query_count();
  Matrix out(n, batch.key_count());
#pragma omp parallel for schedule(static) if (n >= 4)
  for (Index i = 0; i < n; ++i) attention_row(batch, tau, i, out);
  return TransportPlan(std::move(out));
}

TransportPlan serial::attention_matrix(const QueryKeyBatch& batch, double tau) {
  require_positive(tau, "temperature");
  Matrix out(batch.query_count(), batch.key_count());
  for (Index i = 0; i < out.rows(); ++i) attention_row(batch, tau, i, out);
  return TransportPlan(std::move(out));
}

double eot_matrix_objective(const TransportPlan& plan, const CostMatrix& cost, double epsilon) {
  require_positive(epsilon, "epsilon");
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw InvalidArgument("eot_matrix_objective: plan and cost shapes differ");
  }
  const Matrix& p = plan.entries();
  double neg_entropy = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0.0) neg_entropy += p(i, j) * std::log(p(i, j));
    }
  }
  return (p.array() * cost.entries().array()).sum() + epsilon * neg_entropy;
}

TransportPlan solve_full_eot(const QueryKeyBatch& batch, double epsilon,
                             const oracle::SolverConfig& cfg) {
  require_positive(epsilon, "epsilon");
  cfg.validate();
  const RegularizerSpec reg = RegularizerSpec::shannon(epsilon);
  const Index n = batch.query_count();
  Matrix out(n, batch.key_count());

  // Lowest failing row wins so the report matches the serial solve.
  Index first_failure = std::numeric_limits<Index>::max();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (n >= 2)
  for (Index i = 0; i < n; ++i) {
    try {
      if (!eot_row(batch, reg, cfg, i, out)) {
#pragma omp critical(vattn_eot_failure)
        first_failure = std::min(first_failure, i);
      }
    } catch (...) {
#pragma omp critical(vattn_eot_failure)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  if (first_failure != std::numeric_limits<Index>::max()) throw_row_failure(first_failure);
  return TransportPlan(std::move(out));
}

TransportPlan serial::solve_full_eot(const QueryKeyBatch& batch, double epsilon,
                                     const oracle::SolverConfig& cfg) {
  require_positive(epsilon, "epsilon");
  cfg.validate();
  const RegularizerSpec reg = RegularizerSpec::shannon(epsilon);
  Matrix out(batch.query_count(), batch.key_count());
  for (Index i = 0; i < out.rows(); ++i) {
    if (!eot_row(batch, reg, cfg, i, out)) throw_row_failure(i);
  }
  return TransportPlan(std::move(out));
}

Matrix context(const TransportPlan& plan, const ValueSet& values) {
  if (plan.cols() != values.rows()) {
    throw InvalidArgument("context: plan has " + std::to_string(plan.cols()) +
                          " columns but there are " + std::to_string(values.rows()) + " values");
  }
  return plan.entries() * values.values();
}

}  // namespace vattn::transport
