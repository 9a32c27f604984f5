#include "vattn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "vattn/core.hpp"
#include "vattn/gradient.hpp"
#include "vattn/oracle.hpp"
#include "vattn/random.hpp"
#include "vattn/solvers.hpp"
#include "vattn/transport.hpp"

namespace vattn::verify {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using TrialFn = std::function<double(Rng&)>;

struct Check {
  std::string name;
  double tolerance;
  TrialFn trial;
};

struct Suite {
  std::string name;
  std::vector<Check> checks;
};

double sup(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

// --- instance generators ------------------------------------------------------

Index random_m(Rng& rng, Index lo = 2, Index hi = 16) { return rng.integer(lo, hi); }

double random_tau(Rng& rng, Index m) {
  switch (rng.integer(0, 2)) {
    case 0: return 0.5;
    case 1: return 1.0;
    default: return std::sqrt(static_cast<double>(m));
  }
}

Scores random_scores(Rng& rng, Index m) { return Scores(rng.uniform_vector(m, -5.0, 5.0)); }

// Prior bounded away from zero so the oracle's log-domain start stays well scaled.
SimplexDistribution random_prior(Rng& rng, Index m) {
  const Vector mix = 0.5 * rng.dirichlet(m).weights().array() + 0.5 / static_cast<double>(m);
  return SimplexDistribution::renormalized(mix);
}

RegularizerSpec random_regularizer(Rng& rng, RegularizerKind kind, Index m) {
  switch (kind) {
    case RegularizerKind::Shannon: return RegularizerSpec::shannon(random_tau(rng, m));
    case RegularizerKind::L2: return RegularizerSpec::l2();
    case RegularizerKind::Tsallis: {
      static constexpr double kAlphas[] = {1.5, 2.0, 3.0};
      return RegularizerSpec::tsallis(kAlphas[rng.integer(0, 2)]);
    }
    case RegularizerKind::ShannonPlusLinearPenalty: {
      const double tau = random_tau(rng, m);
      return RegularizerSpec::linear_penalty(tau, rng.uniform(0.0, 1.0), rng.integer(1, m));
    }
    case RegularizerKind::KLPrior:
      return RegularizerSpec::kl_prior(random_tau(rng, m), random_prior(rng, m));
  }
  return RegularizerSpec::l2();
}

// Dirichlet(1) on a random face of the simplex (possibly the whole simplex),
// so boundary points are represented.
Vector random_simplex_point(Rng& rng, Index m) {
  const bool full = rng.uniform() < 0.5;
  const Index k = full ? m : rng.integer(1, m);
  std::vector<Index> idx(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) idx[static_cast<std::size_t>(j)] = j;
  for (Index j = 0; j < k; ++j) {  // partial Fisher-Yates
    std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(rng.integer(j, m - 1))]);
  }
  const Vector w = rng.dirichlet(k).weights();
  Vector p = Vector::Zero(m);
  for (Index j = 0; j < k; ++j) p[idx[static_cast<std::size_t>(j)]] = w[j];
  return p;
}

constexpr RegularizerKind kAllKinds[] = {
    RegularizerKind::Shannon, RegularizerKind::L2, RegularizerKind::Tsallis,
    RegularizerKind::ShannonPlusLinearPenalty, RegularizerKind::KLPrior};

std::string kind_name(RegularizerKind k) { return std::string(to_string(k)); }

// --- suites ---------------------------------------------------------------------

Suite closed_forms() {
  Suite s{"closed-forms", {}};
  auto& c = s.checks;

  c.push_back({"solution_on_simplex", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const auto kind = kAllKinds[rng.integer(0, 4)];
                 const auto r = solvers::solve(random_scores(rng, m), random_regularizer(rng, kind, m));
                 const Vector& p = r.distribution.weights();
                 return std::max(std::abs(p.sum() - 1.0), std::max(0.0, -p.minCoeff()));
               }});
  c.push_back({"softmax_shift_invariance", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Vector s = rng.uniform_vector(m, -5.0, 5.0);
                 const double shift = rng.uniform(-10.0, 10.0);
                 const double tau = random_tau(rng, m);
                 const Vector shifted = (s.array() + shift).matrix();
                 return sup(solvers::softmax(Scores(s), tau).distribution.weights(),
                            solvers::softmax(Scores(shifted), tau).distribution.weights());
               }});
  c.push_back({"softmax_temperature_identity", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Vector s = rng.uniform_vector(m, -5.0, 5.0);
                 const double tau = rng.uniform(0.1, 5.0);
                 return sup(solvers::softmax(Scores(s), tau).distribution.weights(),
                            solvers::softmax(Scores(s / tau), 1.0).distribution.weights());
               }});
  c.push_back({"entmax2_equals_sparsemax", 1e-10, [](Rng& rng) {
                 const Scores s = random_scores(rng, random_m(rng));
                 return sup(solvers::entmax(s, 2.0).distribution.weights(),
                            solvers::sparsemax(s).distribution.weights());
               }});
  c.push_back({"entmax_mass_residual", 1e-12, [](Rng& rng) {
                 const Scores s = random_scores(rng, random_m(rng));
                 return solvers::entmax_threshold(s, rng.uniform(1.05, 4.0)).mass_residual;
               }});
  c.push_back({"entmax_shannon_limit", 1e-3, [](Rng& rng) {
                 const Scores s = random_scores(rng, random_m(rng));
                 return sup(solvers::entmax(s, 1.0 + 1e-4).distribution.weights(),
                            solvers::softmax(s, 1.0).distribution.weights());
               }});
  c.push_back({"prior_uniform_equals_softmax", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores s = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 return sup(solvers::prior_softmax(s, SimplexDistribution::uniform(m), tau)
                                .distribution.weights(),
                            solvers::softmax(s, tau).distribution.weights());
               }});
  c.push_back({"alibi_zero_gamma_equals_softmax", 1e-15, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores s = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 return sup(solvers::alibi_softmax(s, rng.integer(1, m), 0.0, tau)
                                .distribution.weights(),
                            solvers::softmax(s, tau).distribution.weights());
               }});
  c.push_back({"sparsemax_support_monotonicity", 0.0, [](Rng& rng) {
                 const Index m = random_m(rng);
                 Vector s = rng.uniform_vector(m, -2.0, 2.0);
                 const Vector before = solvers::sparsemax(Scores(s)).distribution.weights();
                 const Index j = rng.integer(0, m - 1);
                 s[j] += 0.1;
                 const Vector after = solvers::sparsemax(Scores(s)).distribution.weights();
                 return (before[j] > 0.0 && !(after[j] > 0.0)) ? 1.0 : 0.0;
               }});
  c.push_back({"lse_bounds", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores s = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 const double v = solvers::lse(s, tau);
                 const double top = s.values().maxCoeff();
                 return std::max({0.0, top - v, v - top - tau * std::log(static_cast<double>(m))});
               }});
  for (auto kind : kAllKinds) {
    c.push_back({"optimality_certificate/" + kind_name(kind), 1e-9, [kind](Rng& rng) {
                   const Index m = random_m(rng);
                   const Scores s = random_scores(rng, m);
                   const RegularizerSpec reg = random_regularizer(rng, kind, m);
                   const double best = objective_value(solvers::solve(s, reg).distribution, s, reg);
                   double worst_gap = 0.0;
                   for (int k = 0; k < 1000; ++k) {
                     const double f = detail::objective(random_simplex_point(rng, m), s.values(), reg);
                     worst_gap = std::max(worst_gap, best - f);
                   }
                   return worst_gap;
                 }});
  }
  return s;
}

Suite oracle_equivalence() {
  Suite s{"oracle-equivalence", {}};
  auto& c = s.checks;
  for (auto kind : kAllKinds) {
    c.push_back({"oracle_matches_closed_form/" + kind_name(kind), 1e-6, [kind](Rng& rng) {
                   const Index m = random_m(rng);
                   const Scores sc = random_scores(rng, m);
                   const RegularizerSpec reg = random_regularizer(rng, kind, m);
                   const auto r = oracle::minimize_on_simplex(sc, reg, oracle::SolverConfig::for_regularizer(reg));
                   if (!r.converged) return kInf;
                   return sup(r.distribution.weights(), solvers::solve(sc, reg).distribution.weights());
                 }});
  }
  c.push_back({"objective_monotonicity", 0.0, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const auto kind = kAllKinds[rng.integer(0, 4)];
                 const RegularizerSpec reg = random_regularizer(rng, kind, m);
                 const auto r = oracle::minimize_on_simplex(random_scores(rng, m), reg,
                                                            oracle::SolverConfig::for_regularizer(reg));
                 double rise = 0.0;
                 for (std::size_t k = 1; k < r.objective_history.size(); ++k) {
                   rise = std::max(rise, r.objective_history[k] - r.objective_history[k - 1]);
                 }
                 return rise;
               }});
  c.push_back({"grid_sandwich", 1e-12, [](Rng& rng) {
                 const Index m = rng.integer(1, 3);
                 const auto kind = kAllKinds[rng.integer(0, 4)];
                 const Scores sc = random_scores(rng, m);
                 const RegularizerSpec reg = random_regularizer(rng, kind, m);
                 const double closed = objective_value(solvers::solve(sc, reg).distribution, sc, reg);
                 const double grid = oracle::grid_search_simplex(sc, reg, 200).objective;
                 return std::max(0.0, closed - grid);
               }});
  c.push_back({"grid_location_m2", 2e-6, [](Rng& rng) {
                 const Scores sc = random_scores(rng, 2);
                 const double tau = random_tau(rng, 2);
                 const auto g = oracle::grid_search_simplex(sc, RegularizerSpec::shannon(tau), 1000000);
                 return sup(g.distribution.weights(), solvers::softmax(sc, tau).distribution.weights());
               }});
  return s;
}

struct GradientInstance {
  SimplexDistribution p;
  UtilityVector u;
  double tau;
};

GradientInstance random_gradient_instance(Rng& rng) {
  const Index m = random_m(rng, 1, 16);
  const double tau = rng.uniform(0.1, 4.0);
  const Scores s = random_scores(rng, m);
  return {solvers::softmax(s, tau).distribution, UtilityVector(rng.uniform_vector(m, -5.0, 5.0)),
          tau};
}

Suite gradient_identities() {
  Suite s{"gradient-identities", {}};
  auto& c = s.checks;
  c.push_back({"chain_rule_equals_advantage", 1e-12, [](Rng& rng) {
                 const auto g = random_gradient_instance(rng);
                 return sup(gradient::chain_rule_gradient(g.p, g.u, g.tau),
                            gradient::advantage_gradient(g.p, g.u, g.tau).score_gradient);
               }});
  c.push_back({"natural_gradient_identity", 1e-12, [](Rng& rng) {
                 const auto g = random_gradient_instance(rng);
                 return gradient::natural_gradient_identity_check(g.p, g.u, g.tau);
               }});
  c.push_back({"score_gradient_zero_sum", 1e-10, [](Rng& rng) {
                 const auto g = random_gradient_instance(rng);
                 return std::abs(gradient::advantage_gradient(g.p, g.u, g.tau).score_gradient.sum());
               }});
  c.push_back({"advantage_zero_mean", 1e-10, [](Rng& rng) {
                 const auto g = random_gradient_instance(rng);
                 return std::abs(
                     g.p.weights().dot(gradient::advantage_gradient(g.p, g.u, g.tau).advantage));
               }});
  c.push_back({"advantage_sign", 0.0, [](Rng& rng) {
                 const Index m = random_m(rng, 1, 16);
                 const SimplexDistribution p = rng.dirichlet(m);
                 const UtilityVector u(rng.uniform_vector(m, -5.0, 5.0));
                 const auto r = gradient::advantage_gradient(p, u, rng.uniform(0.1, 4.0));
                 double violations = 0.0;
                 for (Index j = 0; j < m; ++j) {
                   if (r.advantage[j] > 0.0 && !(r.score_gradient[j] < 0.0)) violations += 1.0;
                 }
                 return violations;
               }});
  c.push_back({"fisher_psd", 1e-10, [](Rng& rng) {
                 const Index m = random_m(rng, 1, 16);
                 const auto f = gradient::fisher_matrix(rng.dirichlet(m), rng.uniform(0.5, 4.0));
                 return std::max(0.0, -f.eigenvalues().minCoeff());
               }});
  c.push_back({"ones_in_kernel", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng, 1, 16);
                 const SimplexDistribution p = rng.dirichlet(m);
                 const double tau = rng.uniform(0.5, 4.0);
                 const Vector ones = Vector::Ones(m);
                 return std::max(
                     (gradient::softmax_jacobian(p, tau).entries() * ones).lpNorm<Eigen::Infinity>(),
                     (gradient::fisher_matrix(p, tau).entries() * ones).lpNorm<Eigen::Infinity>());
               }});
  c.push_back({"jacobian_equals_tau_fisher", 1e-12, [](Rng& rng) {
                 const Index m = random_m(rng, 1, 16);
                 const SimplexDistribution p = rng.dirichlet(m);
                 const double tau = rng.uniform(0.5, 4.0);
                 return (gradient::softmax_jacobian(p, tau).entries() -
                         tau * gradient::fisher_matrix(p, tau).entries())
                     .lpNorm<Eigen::Infinity>();
               }});
  return s;
}

Suite duality() {
  Suite s{"duality", {}};
  auto& c = s.checks;
  c.push_back({"strong_duality", 1e-10, [](Rng& rng) {
                 const Index m = random_m(rng, 1, 16);
                 const Scores sc = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 return std::abs(solvers::primal_value(sc, tau) + solvers::lse(sc, tau));
               }});
  c.push_back({"fenchel_conjugate_equals_lse", 1e-8, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores sc = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 return std::abs(oracle::fenchel_conjugate(RegularizerSpec::shannon(tau), sc) -
                                 solvers::lse(sc, tau));
               }});
  c.push_back({"fenchel_young_equality", 1e-8, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores sc = random_scores(rng, m);
                 const double tau = random_tau(rng, m);
                 const RegularizerSpec reg = RegularizerSpec::shannon(tau);
                 const SimplexDistribution p = solvers::softmax(sc, tau).distribution;
                 const double conj = oracle::fenchel_conjugate(reg, sc);
                 return std::abs(regularizer_value(p, reg) + conj - p.weights().dot(sc.values()));
               }});
  c.push_back({"envelope_finite_difference", 1e-7, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores sc = random_scores(rng, m);
                 return gradient::envelope_check(sc, random_tau(rng, m), 1e-5);
               }});
  c.push_back({"lse_gradient_finite_difference", 1e-7, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores sc = random_scores(rng, m);
                 return gradient::lse_gradient_check(sc, random_tau(rng, m), 1e-5);
               }});
  c.push_back({"lse_hessian_finite_difference", 1e-6, [](Rng& rng) {
                 const Index m = random_m(rng);
                 const Scores sc = random_scores(rng, m);
                 return gradient::lse_hessian_check(sc, random_tau(rng, m), 1e-4);
               }});
  return s;
}

QueryKeyBatch random_batch(Rng& rng) {
  const Index n = rng.integer(1, 8);
  const Index m = rng.integer(1, 8);
  const Index d = rng.integer(1, 16);
  return QueryKeyBatch(rng.normal_matrix(n, d), rng.normal_matrix(m, d));
}

double random_epsilon(Rng& rng, Index d) {
  switch (rng.integer(0, 2)) {
    case 0: return 0.5;
    case 1: return 1.0;
    default: return std::sqrt(static_cast<double>(d));
  }
}

Suite transport_suite() {
  Suite s{"transport", {}};
  auto& c = s.checks;
  c.push_back({"full_eot_equals_attention", 1e-6, [](Rng& rng) {
                 const QueryKeyBatch b = random_batch(rng);
                 const double eps = random_epsilon(rng, b.dim());
                 return (transport::solve_full_eot(b, eps).entries() -
                         transport::attention_matrix(b, eps).entries())
                     .lpNorm<Eigen::Infinity>();
               }});
  c.push_back({"row_stochastic", 1e-12, [](Rng& rng) {
                 const QueryKeyBatch b = random_batch(rng);
                 return transport::attention_matrix(b, random_epsilon(rng, b.dim()))
                     .max_row_sum_error();
               }});
  c.push_back({"row_separability", 1e-12, [](Rng& rng) {
                 const QueryKeyBatch b = random_batch(rng);
                 const double eps = random_epsilon(rng, b.dim());
                 const auto plan = transport::attention_matrix(b, eps);
                 const auto cost = transport::cost_matrix(b);
                 const RegularizerSpec reg = RegularizerSpec::shannon(eps);
                 double rows = 0.0;
                 for (Index i = 0; i < plan.rows(); ++i) {
                   rows += detail::objective(plan.entries().row(i).transpose(),
                                             -cost.entries().row(i).transpose(), reg);
                 }
                 const double whole = transport::eot_matrix_objective(plan, cost, eps);
                 return std::abs(whole - rows);
               }});
  c.push_back({"attention_beats_random_plans", 1e-9, [](Rng& rng) {
                 const QueryKeyBatch b = random_batch(rng);
                 const double eps = random_epsilon(rng, b.dim());
                 const auto cost = transport::cost_matrix(b);
                 const double best =
                     transport::eot_matrix_objective(transport::attention_matrix(b, eps), cost, eps);
                 double gap = 0.0;
                 Matrix plan(b.query_count(), b.key_count());
                 for (int k = 0; k < 1000; ++k) {
                   for (Index i = 0; i < plan.rows(); ++i) {
                     plan.row(i) = rng.dirichlet(b.key_count()).weights().transpose();
                   }
                   gap = std::max(gap, best - transport::eot_matrix_objective(
                                                  transport::TransportPlan(plan), cost, eps));
                 }
                 return gap;
               }});
  c.push_back({"parallel_matches_serial", 0.0, [](Rng& rng) {
                 const QueryKeyBatch b = random_batch(rng);
                 const double eps = random_epsilon(rng, b.dim());
                 return (transport::attention_matrix(b, eps).entries() -
                         transport::serial::attention_matrix(b, eps).entries())
                     .lpNorm<Eigen::Infinity>();
               }});
  return s;
}

Suite make_suite(std::string_view name) {
  if (name == "closed-forms") return closed_forms();
  if (name == "oracle-equivalence") return oracle_equivalence();
  if (name == "gradient-identities") return gradient_identities();
  if (name == "duality") return duality();
  if (name == "transport") return transport_suite();
  throw InvalidArgument("unknown verification suite '" + std::string(name) + "'");
}

RunReport run(const Suite& suite, const Options& opt) {
  RunReport report;
  report.suite = suite.name;
  report.seed = opt.seed;
  report.trials = opt.trials;
  const auto start = std::chrono::steady_clock::now();

  for (const Check& check : suite.checks) {
    const std::string stream = suite.name + "/" + check.name;
    std::vector<double> residuals(static_cast<std::size_t>(opt.trials), 0.0);
    std::vector<std::string> errors(static_cast<std::size_t>(opt.trials));

#pragma omp parallel for schedule(dynamic) num_threads(opt.jobs)
    for (int t = 0; t < opt.trials; ++t) {
      Rng rng = Rng::for_stream(opt.seed, stream, static_cast<std::uint64_t>(t));
      try {
        residuals[static_cast<std::size_t>(t)] = check.trial(rng);
      } catch (const std::exception& e) {
        residuals[static_cast<std::size_t>(t)] = kInf;
        errors[static_cast<std::size_t>(t)] = e.what();
      }
    }

    CheckResult result;
    result.name = check.name;
    result.tolerance = check.tolerance * opt.tolerance_scale;
    for (int t = 0; t < opt.trials; ++t) {
      const double r = residuals[static_cast<std::size_t>(t)];
      const bool ok = r <= result.tolerance;  // false for NaN
      ++result.cases_run;
      if (ok) ++result.cases_passed;
      if (std::isnan(r) || r > result.residual) result.residual = std::isnan(r) ? kInf : r;
      if (!errors[static_cast<std::size_t>(t)].empty()) {
        report.notes.push_back(check.name + " trial " + std::to_string(t) + ": " +
                               errors[static_cast<std::size_t>(t)]);
      }
    }
    result.passed = result.cases_passed == result.cases_run;
    report.add(std::move(result));
  }

  report.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

}  // namespace

void RunReport::add(CheckResult check) {
  cases_run += check.cases_run;
  cases_passed += check.cases_passed;
  max_residual = std::max(max_residual, check.residual);
  per_check.push_back(std::move(check));
}

void RunReport::absorb(RunReport child) {
  for (const CheckResult& c : child.per_check) {
    CheckResult prefixed = c;
    prefixed.name = child.suite + "/" + c.name;
    add(std::move(prefixed));
  }
  for (const std::string& n : child.notes) notes.push_back(child.suite + ": " + n);
  wall_time_ms += child.wall_time_ms;
  suites.push_back(std::move(child));
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"closed-forms", "oracle-equivalence",
                                                 "gradient-identities", "duality", "transport"};
  return names;
}

RunReport run_suite(std::string_view name, const Options& options) {
  if (options.trials < 1) throw InvalidArgument("trials must be >= 1");
  if (options.jobs < 1) throw InvalidArgument("jobs must be >= 1");
  if (!(options.tolerance_scale > 0.0) || !std::isfinite(options.tolerance_scale)) {
    throw InvalidArgument("tolerance scale must be a finite positive number");
  }
  if (name != "all") return run(make_suite(name), options);

  RunReport all;
  all.suite = "all";
  all.seed = options.seed;
  all.trials = options.trials;
  for (const std::string& n : suite_names()) all.absorb(run(make_suite(n), options));
  return all;
}

}  // namespace vattn::verify
