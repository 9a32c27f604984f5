#include "vattn/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace vattn::solvers {
namespace {

constexpr double kEntmaxResidual = 1e-12;
constexpr int kEntmaxMaxIterations = 200;

void require_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("temperature must be a finite positive number, got " +
                          std::to_string(tau));
  }
}

// Builds the result from nonnegative weights whose sum is 1 up to rounding.
SolveResult finish(Vector weights, std::optional<double> potential) {
  weights /= weights.sum();
  SimplexDistribution p(std::move(weights));
  const Index support = p.support_size();
  return SolveResult{std::move(p), potential, support};
}

double lse_raw(const Vector& s, double tau) {
  const double top = s.maxCoeff();
  const double sum = ((s.array() - top) / tau).exp().sum();
  return top + tau * std::log(sum);
}

SolveResult softmax_raw(const Vector& s, double tau) {
  const double top = s.maxCoeff();
  Vector e = ((s.array() - top) / tau).exp().matrix();
  const double sum = e.sum();
  const double potential = top + tau * std::log(sum);
  e /= sum;
  return finish(std::move(e), potential);
}

// Entmax mass as a function of delta in [0, 1], where
//   theta = max(s) - (1 - delta)/(alpha - 1)
// so that (alpha-1)(s_k - theta) = 1 + z_k - delta with z_k = (alpha-1)(s_k - max s) <= 0.
// The log1p form keeps full relative precision when alpha is close to 1.
//
// Evaluated in long double: for alpha well above 2 the mass is steep near
// the support edge (x^(1/(alpha-1)) has unbounded slope at 0), and adjacent
// double values of delta can straddle 1 by more than the residual target.
using Wide = long double;

struct EntmaxMass {
  std::vector<Wide> z;
  Wide inv_exponent;  // 1/(alpha-1)

  Wide entry(std::size_t k, Wide delta) const {
    const Wide w = z[k] - delta;
    if (w <= -1.0L) return 0.0L;
    return std::exp(std::log1p(w) * inv_exponent);
  }

  Wide mass(Wide delta) const {
    Wide acc = 0.0L;
    for (std::size_t k = 0; k < z.size(); ++k) acc += entry(k, delta);
    return acc;
  }
};

struct EntmaxSolution {
  EntmaxThreshold threshold;
  Wide delta;
};

EntmaxSolution entmax_bisect(const EntmaxMass& f, double s_max, double alpha) {
  const Wide lift = 1.0L / (static_cast<Wide>(alpha) - 1.0L);
  auto theta_of = [&](Wide delta) {
    return static_cast<double>(static_cast<Wide>(s_max) - (1.0L - delta) * lift);
  };

  Wide lo = 0.0L;  // mass(lo) >= 1
  Wide hi = 1.0L;  // mass(hi) == 0
  Wide delta = lo;
  Wide residual = std::abs(f.mass(lo) - 1.0L);
  int it = 0;
  while (residual >= kEntmaxResidual && it < kEntmaxMaxIterations) {
    ++it;
    const Wide mid = 0.5L * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket exhausted
    const Wide m = f.mass(mid);
    delta = mid;
    residual = std::abs(m - 1.0L);
    if (m > 1.0L) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (!(residual < kEntmaxResidual)) {
    std::ostringstream msg;
    msg << "entmax bisection did not reach mass residual 1e-12 (residual "
        << static_cast<double>(residual) << " after " << it << " iterations)";
    throw NumericalFailure(msg.str());
  }
  return {EntmaxThreshold{theta_of(delta), static_cast<double>(residual), it}, delta};
}

EntmaxMass make_entmax_mass(const Scores& s, double alpha) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("entmax needs alpha > 1 (use softmax for the Shannon limit), got " +
                          std::to_string(alpha));
  }
  const Wide s_max = s.values().maxCoeff();
  const Wide am1 = static_cast<Wide>(alpha) - 1.0L;
  EntmaxMass f{std::vector<Wide>(static_cast<std::size_t>(s.size())), 1.0L / am1};
  for (Index k = 0; k < s.size(); ++k) {
    f.z[static_cast<std::size_t>(k)] = (static_cast<Wide>(s[k]) - s_max) * am1;
  }
  return f;
}

}  // namespace

SolveResult softmax(const Scores& s, double tau) {
  require_temperature(tau);
  return softmax_raw(s.values(), tau);
}

SolveResult sparsemax(const Scores& s) {
  const Vector& x = s.values();
  const Index m = x.size();

  Vector sorted = x;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  // Largest k with 1 + k * s_(k) > sum_{r <= k} s_(r); k = 1 always qualifies.
  Index k = 1;
  double support_sum = sorted[0];
  double cumulative = 0.0;
  for (Index r = 1; r <= m; ++r) {
    cumulative += sorted[r - 1];
    if (1.0 + static_cast<double>(r) * sorted[r - 1] > cumulative) {
      k = r;
      support_sum = cumulative;
    }
  }
  const double theta = (support_sum - 1.0) / static_cast<double>(k);
  const double cutoff = sorted[k - 1];

  Vector p(m);
  for (Index j = 0; j < m; ++j) {
    p[j] = x[j] >= cutoff ? std::max(0.0, x[j] - theta) : 0.0;
  }
  return finish(std::move(p), std::nullopt);
}

EntmaxThreshold entmax_threshold(const Scores& s, double alpha) {
  const EntmaxMass f = make_entmax_mass(s, alpha);
  return entmax_bisect(f, s.values().maxCoeff(), alpha).threshold;
}

SolveResult entmax(const Scores& s, double alpha) {
  const EntmaxMass f = make_entmax_mass(s, alpha);
  const EntmaxSolution sol = entmax_bisect(f, s.values().maxCoeff(), alpha);
  Vector p(s.size());
  for (Index k = 0; k < p.size(); ++k) {
    const double v = static_cast<double>(f.entry(static_cast<std::size_t>(k), sol.delta));
    p[k] = v < std::numeric_limits<double>::min() ? 0.0 : v;  // no denormals in the support
  }
  return finish(std::move(p), std::nullopt);
}

SolveResult alibi_softmax(const Scores& s, Index query_position, double gamma, double tau) {
  require_temperature(tau);
  if (query_position < 1) throw InvalidArgument("alibi query position is 1-based");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("alibi gamma must be >= 0");
  }
  Vector biased = s.values();
  for (Index j = 0; j < biased.size(); ++j) {
    biased[j] -= gamma * static_cast<double>(std::abs(query_position - (j + 1)));
  }
  return softmax_raw(biased, tau);
}

SolveResult prior_softmax(const Scores& s, const SimplexDistribution& prior, double tau) {
  require_temperature(tau);
  if (prior.size() != s.size()) throw InvalidArgument("prior_softmax: prior length mismatch");
  if (!prior.strictly_positive()) throw InvalidArgument("prior_softmax: prior has a zero entry");
  const Vector shifted = s.values() + tau * prior.weights().array().log().matrix();
  return softmax_raw(shifted, tau);
}

double lse(const Scores& s, double tau) {
  require_temperature(tau);
  return lse_raw(s.values(), tau);
}

double primal_value(const Scores& s, double tau) {
  const SolveResult r = softmax(s, tau);
  return detail::objective(r.distribution.weights(), s.values(), RegularizerSpec::shannon(tau));
}

SolveResult solve(const Scores& s, const RegularizerSpec& reg) {
  using R = RegularizerSpec;
  reg.check_length(s.size());
  switch (reg.kind()) {
    case RegularizerKind::Shannon:
      return softmax(s, reg.as<R::Shannon>().temperature);
    case RegularizerKind::L2:
      return sparsemax(s);
    case RegularizerKind::Tsallis:
      return entmax(s, reg.as<R::Tsallis>().alpha);
    case RegularizerKind::ShannonPlusLinearPenalty: {
      const auto& lp = reg.as<R::ShannonPlusLinearPenalty>();
      return alibi_softmax(s, lp.query_position, lp.gamma, lp.temperature);
    }
    case RegularizerKind::KLPrior: {
      const auto& kl = reg.as<R::KLPrior>();
      return prior_softmax(s, kl.prior, kl.temperature);
    }
  }
  throw InvalidArgument("unknown regularizer kind");
}

}  // namespace vattn::solvers
