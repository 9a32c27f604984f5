#include "vattn/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "vattn/solvers.hpp"

namespace vattn::oracle {
namespace {

using R = RegularizerSpec;

constexpr int kMaxHalvings = 400;

// Slack on the sufficient-decrease test; absorbs rounding in f near the optimum.
double decrease_slack(double f) {
  return 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
}

double sup_norm(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

void check_objective(double f) {
  if (std::isnan(f)) throw NumericalFailure("oracle objective evaluated to NaN");
}

// Gradient of the objective. log_p is used by the Shannon family so that
// entries that underflow to zero keep a finite gradient.
Vector objective_gradient(const Vector& p, const Vector& log_p, const Vector& s,
                          const RegularizerSpec& reg) {
  const Index m = s.size();
  Vector g(m);
  switch (reg.kind()) {
    case RegularizerKind::Shannon: {
      const double tau = reg.as<R::Shannon>().temperature;
      g = -s + tau * (log_p.array() + 1.0).matrix();
      break;
    }
    case RegularizerKind::L2:
      g = -s + p;
      break;
    case RegularizerKind::Tsallis: {
      const double a = reg.as<R::Tsallis>().alpha;
      for (Index j = 0; j < m; ++j) {
        const double pa = p[j] > 0.0 ? std::pow(p[j], a - 1.0) : 0.0;
        g[j] = -s[j] + (a * pa - 1.0) / (a * (a - 1.0));
      }
      break;
    }
    case RegularizerKind::ShannonPlusLinearPenalty: {
      const auto& lp = reg.as<R::ShannonPlusLinearPenalty>();
      for (Index j = 0; j < m; ++j) {
        const double dist = static_cast<double>(std::abs(lp.query_position - (j + 1)));
        g[j] = -s[j] + lp.temperature * (log_p[j] + 1.0) + lp.gamma * dist;
      }
      break;
    }
    case RegularizerKind::KLPrior: {
      const auto& kl = reg.as<R::KLPrior>();
      const Vector& prior = kl.prior.weights();
      for (Index j = 0; j < m; ++j) {
        g[j] = -s[j] + kl.temperature * (log_p[j] - std::log(prior[j]) + 1.0);
      }
      break;
    }
  }
  return g;
}

// Mirror-descent state shared by both first-order methods.
struct Iterate {
  Vector p;
  Vector log_p;
  double f;
};

Vector safe_log(const Vector& p) {
  Vector out(p.size());
  for (Index j = 0; j < p.size(); ++j) {
    out[j] = p[j] > 0.0 ? std::log(p[j]) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

// One candidate step from `x` at step size eta, together with the
// right-hand side of the sufficient-decrease (majorization) test.
struct Candidate {
  Iterate next;
  double bound;
};

Candidate eg_step(const Iterate& x, const Vector& g, double eta, const Vector& s,
                  const RegularizerSpec& reg) {
  Vector y = x.log_p - eta * g;
  const double top = y.maxCoeff();
  const double norm = top + std::log((y.array() - top).exp().sum());
  Vector log_p = (y.array() - norm).matrix();
  Vector p = log_p.array().exp().matrix();
  p /= p.sum();
  double kl = 0.0;
  for (Index j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) kl += p[j] * (log_p[j] - x.log_p[j]);
  }
  const double f = detail::objective(p, s, reg);
  check_objective(f);
  const double bound = x.f + g.dot(p - x.p) + kl / eta;
  return {Iterate{std::move(p), std::move(log_p), f}, bound};
}

Candidate pg_step(const Iterate& x, const Vector& g, double eta, const Vector& s,
                  const RegularizerSpec& reg) {
  if (!g.allFinite()) throw NumericalFailure("projected gradient hit an infinite gradient");
  Vector p = project_simplex(x.p - eta * g);
  const double f = detail::objective(p, s, reg);
  check_objective(f);
  const Vector d = p - x.p;
  const double bound = x.f + g.dot(d) + d.squaredNorm() / (2.0 * eta);
  Vector log_p = safe_log(p);
  return {Iterate{std::move(p), std::move(log_p), f}, bound};
}

OracleResult first_order(const Scores& scores, const RegularizerSpec& reg,
                         const SolverConfig& cfg) {
  const Vector& s = scores.values();
  const Index m = s.size();
  const bool exponentiated = cfg.method == Method::ExponentiatedGradient;

  Iterate x;
  x.p = Vector::Constant(m, 1.0 / static_cast<double>(m));
  x.log_p = Vector::Constant(m, -std::log(static_cast<double>(m)));
  x.f = detail::objective(x.p, s, reg);
  check_objective(x.f);

  OracleResult out{SimplexDistribution(x.p), x.f, 0, false, {x.f}};
  if (m == 1) {
    out.converged = true;
    return out;
  }

  double eta = cfg.step_size;
  Vector prev_step = Vector::Zero(m);
  int it = 0;
  bool converged = false;
  while (it < cfg.max_iterations && !converged) {
    ++it;
    const Vector g = objective_gradient(x.p, x.log_p, s, reg);
    bool accepted = false;
    bool grow = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      Candidate c = exponentiated ? eg_step(x, g, eta, s, reg) : pg_step(x, g, eta, s, reg);
      const double change = sup_norm(c.next.p, x.p);
      const double slack = decrease_slack(x.f);
      if (c.next.f <= x.f && c.next.f <= c.bound + slack) {
        // Below the rounding floor of f the test above cannot see overshoot,
        // and a too-long step can bounce around the optimum indefinitely.
        // Such a bounce shows up as a reversal of direction.
        const bool measurable = c.next.f < x.f - slack;
        grow = measurable;
        Vector step = c.next.p - x.p;
        if (!measurable && step.dot(prev_step) < 0.0) eta *= 0.5;
        prev_step = std::move(step);
        x = std::move(c.next);
        out.objective_history.push_back(x.f);
        converged = change < cfg.tolerance;
        accepted = true;
        break;
      }
      if (change < cfg.tolerance) {
        // The step is already below tolerance and cannot improve f.
        converged = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted && !converged) {
      throw NumericalFailure("oracle backtracking exhausted without progress");
    }
    if (grow) eta *= 2.0;
  }

  out.distribution = SimplexDistribution(std::move(x.p));
  out.objective = x.f;
  out.iterations = it;
  out.converged = converged;
  return out;
}

void check_grid_args(const Scores& s, const RegularizerSpec& reg, int resolution) {
  if (s.size() > 3) {
    throw InvalidArgument("grid search supports m <= 3, got m = " + std::to_string(s.size()));
  }
  if (resolution < 100) throw InvalidArgument("grid resolution must be >= 100");
  reg.check_length(s.size());
}

// Grid point a, b -> (a, b, R - a - b) / R, truncated to m coordinates.
void grid_point(Index m, int resolution, int a, int b, Vector& p) {
  const double r = static_cast<double>(resolution);
  if (m == 1) {
    p[0] = 1.0;
  } else if (m == 2) {
    p[0] = a / r;
    p[1] = (resolution - a) / r;
  } else {
    p[0] = a / r;
    p[1] = b / r;
    p[2] = (resolution - a - b) / r;
  }
}

struct GridBest {
  double f = std::numeric_limits<double>::infinity();
  int a = -1;
  int b = -1;

  // Smaller objective wins; exact ties go to the smaller (a, b).
  void offer(double fv, int av, int bv) {
    if (fv < f || (fv == f && std::tie(av, bv) < std::tie(a, b))) {
      f = fv;
      a = av;
      b = bv;
    }
  }
};

// Scans all grid points with first coordinate a; fills best.
void scan_row(const Vector& s, const RegularizerSpec& reg, int resolution, int a, Vector& p,
              GridBest& best) {
  const Index m = s.size();
  const int b_max = m == 3 ? resolution - a : 0;
  for (int b = 0; b <= b_max; ++b) {
    grid_point(m, resolution, a, b, p);
    const double f = detail::objective(p, s, reg);
    best.offer(f, a, b);
  }
}

OracleResult grid_result(const Scores& s, int resolution,
                         const GridBest& best, long long evaluated) {
  if (best.a < 0) throw NumericalFailure("grid search found no finite objective");
  Vector p(s.size());
  grid_point(s.size(), resolution, best.a, best.b, p);
  return OracleResult{SimplexDistribution::renormalized(std::move(p)), best.f,
                      static_cast<int>(std::min<long long>(evaluated,
                                                           std::numeric_limits<int>::max())),
                      true,
                      {best.f}};
}

long long grid_size(Index m, int resolution) {
  const long long r = resolution;
  if (m == 1) return 1;
  if (m == 2) return r + 1;
  return (r + 1) * (r + 2) / 2;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(tolerance > 0.0)) throw InvalidArgument("solver tolerance must be > 0");
  if (max_iterations < 1) throw InvalidArgument("solver max_iterations must be >= 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw InvalidArgument("solver step_size must be a finite positive number");
  }
  if (method == Method::GridSearch && grid_resolution < 100) {
    throw InvalidArgument("grid resolution must be >= 100");
  }
}

SolverConfig SolverConfig::for_regularizer(const RegularizerSpec& reg) {
  SolverConfig cfg;
  switch (reg.kind()) {
    case RegularizerKind::L2:
      cfg.method = Method::ProjectedGradient;
      break;
    case RegularizerKind::Tsallis:
      cfg.method = reg.as<R::Tsallis>().alpha < 2.0 ? Method::ExponentiatedGradient
                                                     : Method::ProjectedGradient;
      break;
    default:
      cfg.method = Method::ExponentiatedGradient;
  }
  return cfg;
}

Vector project_simplex(const Vector& x) {
  return solvers::sparsemax(Scores(x)).distribution.weights();
}

OracleResult minimize_on_simplex(const Scores& s, const RegularizerSpec& reg,
                                 const SolverConfig& cfg) {
  cfg.validate();
  reg.check_length(s.size());
  if (cfg.method == Method::GridSearch) {
    return grid_search_simplex(s, reg, cfg.grid_resolution);
  }
  return first_order(s, reg, cfg);
}

OracleResult grid_search_simplex(const Scores& s, const RegularizerSpec& reg, int resolution) {
  check_grid_args(s, reg, resolution);
  const Index m = s.size();
  const int a_max = m == 1 ? 0 : resolution;

  GridBest best;
#pragma omp parallel
  {
    GridBest local;
    Vector p(m);
#pragma omp for schedule(dynamic, 16) nowait
    for (int a = 0; a <= a_max; ++a) {
      scan_row(s.values(), reg, resolution, a, p, local);
    }
#pragma omp critical(vattn_grid_merge)
    best.offer(local.f, local.a, local.b);
  }
  return grid_result(s, resolution, best, grid_size(m, resolution));
}

OracleResult serial::grid_search_simplex(const Scores& s, const RegularizerSpec& reg,
                                         int resolution) {
  check_grid_args(s, reg, resolution);
  const Index m = s.size();
  const int a_max = m == 1 ? 0 : resolution;

  GridBest best;
  Vector p(m);
  for (int a = 0; a <= a_max; ++a) scan_row(s.values(), reg, resolution, a, p, best);
  return grid_result(s, resolution, best, grid_size(m, resolution));
}

double fenchel_conjugate(const RegularizerSpec& reg, const Scores& s, const SolverConfig& cfg) {
  const OracleResult r = minimize_on_simplex(s, reg, cfg);
  if (!r.converged) {
    throw NumericalFailure("fenchel_conjugate: inner solve did not converge after " +
                           std::to_string(r.iterations) + " iterations");
  }
  return -r.objective;
}

}  // namespace vattn::oracle
