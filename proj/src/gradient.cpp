#include "vattn/gradient.hpp"

#include <cmath>
#include <string>

#include "vattn/solvers.hpp"

namespace vattn::gradient {
namespace {

void require_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("temperature must be a finite positive number");
  }
}

void require_step(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("finite-difference step must be > 0");
}

void require_square_finite(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw InvalidArgument(std::string(what) + " must be square");
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + " has non-finite entries");
}

double checked(double v) {
  if (!std::isfinite(v)) throw NumericalFailure("finite difference: non-finite function value");
  return v;
}

// diag(p) - p p^T
Matrix covariance(const Vector& p) {
  Matrix c = -p * p.transpose();
  c.diagonal() += p;
  return c;
}

double fd_partial(const ScalarFunction& f, const Vector& x, Index j, double h) {
  Vector xp = x;
  Vector xm = x;
  xp[j] += h;
  xm[j] -= h;
  return (checked(f(xp)) - checked(f(xm))) / (2.0 * h);
}

double fd_second(const ScalarFunction& f, const Vector& x, double fx, Index i, Index j,
                 double h) {
  if (i == j) {
    Vector xp = x;
    Vector xm = x;
    xp[i] += h;
    xm[i] -= h;
    return (checked(f(xp)) - 2.0 * fx + checked(f(xm))) / (h * h);
  }
  Vector pp = x, pm = x, mp = x, mm = x;
  pp[i] += h, pp[j] += h;
  pm[i] += h, pm[j] -= h;
  mp[i] -= h, mp[j] += h;
  mm[i] -= h, mm[j] -= h;
  return (checked(f(pp)) - checked(f(pm)) - checked(f(mp)) + checked(f(mm))) / (4.0 * h * h);
}

// Upper-triangle pairs (i, j), i <= j, in row-major order.
std::pair<Index, Index> pair_at(Index m, Index k) {
  Index i = 0;
  while (k >= m - i) {
    k -= m - i;
    ++i;
  }
  return {i, i + k};
}

ScalarFunction lse_of(double tau) {
  return [tau](const Vector& x) { return solvers::lse(Scores(x), tau); };
}

}  // namespace

JacobianMatrix::JacobianMatrix(Matrix entries, double temperature)
    : entries_(std::move(entries)), temperature_(temperature) {
  require_temperature(temperature_);
  require_square_finite(entries_, "Jacobian");
}

FisherMatrix::FisherMatrix(Matrix entries, double temperature)
    : entries_(std::move(entries)), temperature_(temperature) {
  require_temperature(temperature_);
  require_square_finite(entries_, "Fisher matrix");
}

Vector FisherMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(entries_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

JacobianMatrix softmax_jacobian(const SimplexDistribution& p, double tau) {
  require_temperature(tau);
  return JacobianMatrix(covariance(p.weights()) / tau, tau);
}

UtilityVector marginal_utility(const Vector& context_gradient, const ValueSet& values) {
  if (context_gradient.size() != values.dim()) {
    throw InvalidArgument("marginal_utility: context gradient has length " +
                          std::to_string(context_gradient.size()) + ", values have dimension " +
                          std::to_string(values.dim()));
  }
  return UtilityVector(-(values.values() * context_gradient));
}

GradientReport advantage_gradient(const SimplexDistribution& p, const UtilityVector& u,
                                  double tau) {
  require_temperature(tau);
  if (p.size() != u.size()) throw InvalidArgument("advantage_gradient: length mismatch");
  const Vector& w = p.weights();
  const Vector& uv = u.values();
  const double expected = w.dot(uv);
  // u_j - E[u] written as sum_k p_k (u_j - u_k): exactly zero for constant u.
  Vector advantage(uv.size());
  for (Index j = 0; j < uv.size(); ++j) {
    advantage[j] = w.dot((uv[j] - uv.array()).matrix());
  }
  Vector grad = -(w.array() * advantage.array()).matrix() / tau;
  return GradientReport{std::move(grad), std::move(advantage), expected};
}

Vector chain_rule_gradient(const SimplexDistribution& p, const UtilityVector& u, double tau) {
  if (p.size() != u.size()) throw InvalidArgument("chain_rule_gradient: length mismatch");
  const JacobianMatrix jac = softmax_jacobian(p, tau);
  // dL/ds_j = sum_k (dL/dp_k)(dp_k/ds_j) with dL/dp_k = -u_k.
  return -(jac.entries().transpose() * u.values());
}

FisherMatrix fisher_matrix(const SimplexDistribution& p, double tau) {
  require_temperature(tau);
  return FisherMatrix(covariance(p.weights()) / (tau * tau), tau);
}

double natural_gradient_identity_check(const SimplexDistribution& p, const UtilityVector& u,
                                       double tau) {
  const GradientReport report = advantage_gradient(p, u, tau);
  const FisherMatrix fisher = fisher_matrix(p, tau);
  const Vector natural = -tau * (fisher.entries() * u.values());
  return (report.score_gradient - natural).lpNorm<Eigen::Infinity>();
}

double lse_hessian_check(const Scores& s, double tau, double h) {
  require_temperature(tau);
  require_step(h);
  const Matrix fd = finite_difference_hessian(lse_of(tau), s.values(), h);
  const FisherMatrix fisher = fisher_matrix(solvers::softmax(s, tau).distribution, tau);
  return (fd - tau * fisher.entries()).lpNorm<Eigen::Infinity>();
}

double envelope_check(const Scores& s, double tau, double h) {
  require_temperature(tau);
  require_step(h);
  const Vector fd = finite_difference_gradient(
      [tau](const Vector& x) { return solvers::primal_value(Scores(x), tau); }, s.values(), h);
  const Vector p = solvers::softmax(s, tau).distribution.weights();
  return (fd + p).lpNorm<Eigen::Infinity>();
}

double lse_gradient_check(const Scores& s, double tau, double h) {
  require_temperature(tau);
  require_step(h);
  const Vector fd = finite_difference_gradient(lse_of(tau), s.values(), h);
  const Vector p = solvers::softmax(s, tau).distribution.weights();
  return (fd - p).lpNorm<Eigen::Infinity>();
}

Vector finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h) {
  require_step(h);
  const Index m = x.size();
  Vector g(m);
  bool failed = false;
#pragma omp parallel for schedule(static) if (m >= 8)
  for (Index j = 0; j < m; ++j) {
    try {
      g[j] = fd_partial(f, x, j, h);
    } catch (...) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) throw NumericalFailure("finite difference: non-finite function value");
  return g;
}

Matrix finite_difference_hessian(const ScalarFunction& f, const Vector& x, double h) {
  require_step(h);
  const Index m = x.size();
  const double fx = checked(f(x));
  const Index pairs = m * (m + 1) / 2;
  Matrix hess(m, m);
  bool failed = false;
#pragma omp parallel for schedule(static) if (pairs >= 16)
  for (Index k = 0; k < pairs; ++k) {
    const auto [i, j] = pair_at(m, k);
    try {
      const double v = fd_second(f, x, fx, i, j, h);
      hess(i, j) = v;
      hess(j, i) = v;
    } catch (...) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) throw NumericalFailure("finite difference: non-finite function value");
  return hess;
}

Vector serial::finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h) {
  require_step(h);
  Vector g(x.size());
  for (Index j = 0; j < x.size(); ++j) g[j] = fd_partial(f, x, j, h);
  return g;
}

Matrix serial::finite_difference_hessian(const ScalarFunction& f, const Vector& x, double h) {
  require_step(h);
  const Index m = x.size();
  const double fx = checked(f(x));
  Matrix hess(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i; j < m; ++j) {
      const double v = fd_second(f, x, fx, i, j, h);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace vattn::gradient
