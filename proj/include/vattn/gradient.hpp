#pragma once

// Backward-pass identities of softmax attention: Jacobian, marginal utility,
// the advantage form of dL/ds, the Fisher information of the attention
// distribution, and finite-difference checks of the potential's derivatives.

#include <functional>

#include "vattn/core.hpp"

namespace vattn::gradient {

/// dp_k/ds_j = (1/tau) p_k (delta_kj - p_j), stored as entries(k, j).
class JacobianMatrix {
 public:
  JacobianMatrix(Matrix entries, double temperature);

  const Matrix& entries() const noexcept { return entries_; }
  double temperature() const noexcept { return temperature_; }

 private:
  Matrix entries_;
  double temperature_;
};

/// (1/tau^2)(diag p - p p^T).
class FisherMatrix {
 public:
  FisherMatrix(Matrix entries, double temperature);

  const Matrix& entries() const noexcept { return entries_; }
  double temperature() const noexcept { return temperature_; }

  /// Ascending eigenvalues (self-adjoint solver).
  Vector eigenvalues() const;

 private:
  Matrix entries_;
  double temperature_;
};

struct GradientReport {
  /// dL/ds_j = -(p_j/tau)(u_j - E_p[u])
  Vector score_gradient;
  /// A_j = u_j - E_p[u]
  Vector advantage;
  double expected_utility;
};

JacobianMatrix softmax_jacobian(const SimplexDistribution& p, double tau);

/// u_j = -<dL/dc, v_j>.
UtilityVector marginal_utility(const Vector& context_gradient, const ValueSet& values);

GradientReport advantage_gradient(const SimplexDistribution& p, const UtilityVector& u,
                                  double tau);

/// -J^T u, computed through softmax_jacobian.
Vector chain_rule_gradient(const SimplexDistribution& p, const UtilityVector& u, double tau);

FisherMatrix fisher_matrix(const SimplexDistribution& p, double tau);

/// || advantage_gradient - (-tau F u) ||_inf.
double natural_gradient_identity_check(const SimplexDistribution& p, const UtilityVector& u,
                                       double tau);

/// || central-difference Hessian of lse(., tau) at s  -  tau F(softmax(s, tau)) ||_inf.
double lse_hessian_check(const Scores& s, double tau, double h = 1e-4);

/// || central-difference gradient of primal_value(., tau) at s  +  softmax(s, tau) ||_inf.
double envelope_check(const Scores& s, double tau, double h = 1e-5);

/// || central-difference gradient of lse(., tau) at s  -  softmax(s, tau) ||_inf.
double lse_gradient_check(const Scores& s, double tau, double h = 1e-5);

using ScalarFunction = std::function<double(const Vector&)>;

/// (f(x + h e_j) - f(x - h e_j)) / 2h for every j. OpenMP-parallel over
/// coordinates, so f must be safe to call concurrently. Throws
/// NumericalFailure if any evaluation is non-finite.
Vector finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h = 1e-5);

/// Central-difference Hessian, symmetric by construction.
Matrix finite_difference_hessian(const ScalarFunction& f, const Vector& x, double h = 1e-4);

namespace serial {
Vector finite_difference_gradient(const ScalarFunction& f, const Vector& x, double h = 1e-5);
Matrix finite_difference_hessian(const ScalarFunction& f, const Vector& x, double h = 1e-4);
}  // namespace serial

}  // namespace vattn::gradient
