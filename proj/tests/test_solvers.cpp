#include <doctest.h>

#include <cmath>
#include <limits>

#include "support/oracles.hpp"
#include "vattn/core.hpp"
#include "vattn/random.hpp"
#include "vattn/solvers.hpp"

using namespace vattn;
using namespace vattn::solvers;
using testing::sup;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index j = 0;
  for (double x : xs) v[j++] = x;
  return v;
}

void check_simplex(const SolveResult& r) {
  const Vector& p = r.distribution.weights();
  CHECK(p.minCoeff() >= 0.0);
  CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  Index positive = 0;
  for (Index j = 0; j < p.size(); ++j) positive += p[j] > 0.0;
  CHECK(r.support_size == positive);
}

}  // namespace

TEST_SUITE("solvers") {

TEST_CASE("softmax examples") {
  CHECK(sup(softmax(Scores{0, 0, 0}, 1.0).distribution.weights(), Vector::Constant(3, 1.0 / 3)) <=
        1e-16);
  CHECK(sup(softmax(Scores{std::log(2.0), 0.0}, 1.0).distribution.weights(),
            vec({2.0 / 3, 1.0 / 3})) <= 1e-15);

  const auto big = softmax(Scores{1000.0, 0.0}, 1.0);
  CHECK(big.distribution.weights().allFinite());
  CHECK(big.distribution[0] == 1.0);
  CHECK(big.potential.value() == 1000.0);
}

TEST_CASE("softmax matches long-double reference") {
  Rng rng(21);
  for (int t = 0; t < 2000; ++t) {
    const Index m = rng.integer(1, 32);
    const Vector s = rng.uniform_vector(m, -20.0, 20.0);
    const double tau = rng.uniform(0.05, 5.0);
    const auto r = softmax(Scores(s), tau);
    check_simplex(r);
    CHECK(sup(r.distribution.weights(), testing::softmax_ld(s, tau)) <= 1e-14);
    CHECK(std::abs(*r.potential - testing::lse_ld(s, tau)) <= 1e-13 * (1.0 + std::abs(s.maxCoeff())));
  }
}

TEST_CASE("softmax shift invariance and temperature identity") {
  Rng rng(22);
  for (int t = 0; t < 1000; ++t) {
    const Index m = rng.integer(1, 16);
    const Vector s = rng.uniform_vector(m, -5.0, 5.0);
    const double c = rng.uniform(-10.0, 10.0);
    const double tau = rng.uniform(0.1, 4.0);
    const Vector p = softmax(Scores(s), tau).distribution.weights();
    CHECK(sup(softmax(Scores((s.array() + c).matrix()), tau).distribution.weights(), p) <= 1e-12);
    CHECK(sup(softmax(Scores(s / tau), 1.0).distribution.weights(), p) <= 1e-12);
  }
}

TEST_CASE("softmax rejects non-positive temperature") {
  CHECK_THROWS_AS(softmax(Scores{1.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(lse(Scores{1.0}, -1.0), InvalidArgument);
}

TEST_CASE("sparsemax examples") {
  const auto a = sparsemax(Scores{1.0, 0.0, -1.0});
  CHECK(a.distribution.weights() == vec({1.0, 0.0, 0.0}));
  CHECK(a.support_size == 1);

  const auto b = sparsemax(Scores{0.5, 0.2, -1.0});
  CHECK(sup(b.distribution.weights(), vec({0.65, 0.35, 0.0})) <= 1e-15);
  CHECK(b.distribution[2] == 0.0);
  CHECK(b.support_size == 2);
  CHECK_FALSE(b.potential.has_value());

  CHECK(sup(sparsemax(Scores{0.3, 0.7}).distribution.weights(), vec({0.3, 0.7})) <= 1e-16);
  CHECK(sparsemax(Scores{4.2}).distribution[0] == 1.0);
}

TEST_CASE("sparsemax equals KKT support enumeration") {
  Rng rng(23);
  for (int t = 0; t < 2000; ++t) {
    const Index m = rng.integer(1, 10);
    const Vector s = rng.uniform_vector(m, -2.0, 2.0);
    const auto r = sparsemax(Scores(s));
    check_simplex(r);
    const Vector ref = testing::sparsemax_by_support_enumeration(s);
    REQUIRE(ref.size() == m);
    CHECK(sup(r.distribution.weights(), ref) <= 1e-14);
    for (Index j = 0; j < m; ++j) {
      if (ref[j] == 0.0) CHECK(r.distribution[j] == 0.0);
    }
  }
}

TEST_CASE("sparsemax gives tied scores equal mass") {
  const auto r = sparsemax(Scores{1.0, 1.0, 0.2, 1.0});
  CHECK(r.distribution[0] == r.distribution[1]);
  CHECK(r.distribution[1] == r.distribution[3]);
}

TEST_CASE("sparsemax support is monotone in each score") {
  Rng rng(24);
  for (int t = 0; t < 2000; ++t) {
    const Index m = rng.integer(2, 12);
    Vector s = rng.uniform_vector(m, -1.0, 1.0);
    const Vector p = sparsemax(Scores(s)).distribution.weights();
    const Index j = rng.integer(0, m - 1);
    s[j] += 0.1;
    const Vector q = sparsemax(Scores(s)).distribution.weights();
    if (p[j] > 0.0) CHECK(q[j] > 0.0);
  }
}

TEST_CASE("entmax examples") {
  for (double alpha : {1.2, 1.5, 2.0, 3.0, 7.0}) {
    const auto r = entmax(Scores{0.7, 0.7, 0.7}, alpha);
    CHECK(sup(r.distribution.weights(), Vector::Constant(3, 1.0 / 3)) <= 1e-12);
  }
  CHECK(sup(entmax(Scores{0.5, 0.2, -1.0}, 2.0).distribution.weights(), vec({0.65, 0.35, 0.0})) <=
        1e-10);
  const auto r = entmax(Scores{10.0, 0.0}, 1.5);
  CHECK(r.distribution.weights() == vec({1.0, 0.0}));
  CHECK(r.support_size == 1);
  CHECK_THROWS_AS(entmax(Scores{1.0, 2.0}, 1.0), InvalidArgument);
}

TEST_CASE("entmax at alpha 2 equals sparsemax") {
  Rng rng(25);
  for (int t = 0; t < 1000; ++t) {
    const Index m = rng.integer(1, 16);
    const Scores s(rng.uniform_vector(m, -5.0, 5.0));
    CHECK(sup(entmax(s, 2.0).distribution.weights(), sparsemax(s).distribution.weights()) <= 1e-10);
  }
}

TEST_CASE("entmax threshold leaves a tiny mass residual") {
  Rng rng(26);
  for (int t = 0; t < 1000; ++t) {
    const Index m = rng.integer(1, 16);
    const Scores s(rng.uniform_vector(m, -5.0, 5.0));
    const double alpha = rng.uniform(1.001, 6.0);
    const auto th = entmax_threshold(s, alpha);
    CHECK(th.mass_residual < 1e-12);
    CHECK(th.theta <= s.values().maxCoeff());
    const double floor = s.values().maxCoeff() - 1.0 / (alpha - 1.0);
    CHECK(th.theta >= floor - 1e-12 * (1.0 + std::abs(floor)));
    check_simplex(entmax(s, alpha));
  }
}

TEST_CASE("entmax follows the threshold formula") {
  Rng rng(27);
  for (int t = 0; t < 500; ++t) {
    const Index m = rng.integer(2, 10);
    const Vector s = rng.uniform_vector(m, -3.0, 3.0);
    const double alpha = rng.uniform(1.1, 4.0);
    const auto th = entmax_threshold(Scores(s), alpha);
    Vector q(m);
    for (Index j = 0; j < m; ++j) {
      const double base = (alpha - 1.0) * (s[j] - th.theta);
      q[j] = base > 0.0 ? std::pow(base, 1.0 / (alpha - 1.0)) : 0.0;
    }
    CHECK(std::abs(q.sum() - 1.0) < 1e-10);
    CHECK(sup(entmax(Scores(s), alpha).distribution.weights(), q / q.sum()) < 1e-10);
  }
}

TEST_CASE("entmax approaches softmax as alpha tends to 1") {
  Rng rng(28);
  for (int t = 0; t < 200; ++t) {
    const Index m = rng.integer(2, 16);
    const Scores s(rng.uniform_vector(m, -5.0, 5.0));
    CHECK(sup(entmax(s, 1.0 + 1e-4).distribution.weights(),
              softmax(s, 1.0).distribution.weights()) < 1e-3);
  }
}

TEST_CASE("entmax survives extreme score spreads") {
  const auto r = entmax(Scores{1e6, -1e6, 0.0}, 1.5);
  CHECK(r.distribution.weights() == vec({1.0, 0.0, 0.0}));
  const auto near_one = entmax(Scores{50.0, 0.0, -50.0}, 1.0 + 1e-9);
  CHECK(near_one.distribution[0] == doctest::Approx(1.0));
  // The Shannon limit puts mass exp(-100) on the last key.
  CHECK(near_one.distribution[2] == doctest::Approx(std::exp(-100.0)).epsilon(1e-5));
}

TEST_CASE("alibi examples") {
  const Scores s{0.3, -1.2, 2.0, 0.0};
  CHECK(sup(alibi_softmax(s, 3, 0.0, 0.8).distribution.weights(),
            softmax(s, 0.8).distribution.weights()) <= 1e-15);

  const auto a = alibi_softmax(Scores{0, 0, 0}, 2, 1.0, 1.0);
  CHECK(sup(a.distribution.weights(),
            vec({0.21194155761708545, 0.57611688476582911, 0.21194155761708545})) <= 1e-15);
  CHECK(a.potential.has_value());

  const auto far = alibi_softmax(Scores{0, 0, 0}, 1, 100.0, 1.0);
  CHECK(far.distribution[0] == doctest::Approx(1.0).epsilon(1e-40));
  CHECK(far.distribution[2] < 1e-80);

  CHECK_THROWS_AS(alibi_softmax(s, 0, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(alibi_softmax(s, 1, -1.0, 1.0), InvalidArgument);
}

TEST_CASE("alibi equals softmax of penalized scores") {
  Rng rng(29);
  for (int t = 0; t < 500; ++t) {
    const Index m = rng.integer(1, 16);
    const Vector s = rng.uniform_vector(m, -5.0, 5.0);
    const Index i = rng.integer(1, m);
    const double gamma = rng.uniform(0.0, 2.0);
    const double tau = rng.uniform(0.2, 3.0);
    Vector shifted(m);
    for (Index j = 0; j < m; ++j) shifted[j] = s[j] - gamma * std::abs(static_cast<double>(i - (j + 1)));
    CHECK(sup(alibi_softmax(Scores(s), i, gamma, tau).distribution.weights(),
              testing::softmax_ld(shifted, tau)) <= 1e-14);
  }
}

TEST_CASE("prior softmax examples") {
  const Scores s{0.4, -2.0, 1.1};
  CHECK(sup(prior_softmax(s, SimplexDistribution::uniform(3), 0.6).distribution.weights(),
            softmax(s, 0.6).distribution.weights()) <= 1e-12);
  CHECK(sup(prior_softmax(Scores{0, 0}, SimplexDistribution{0.8, 0.2}, 1.0).distribution.weights(),
            vec({0.8, 0.2})) <= 1e-15);
  CHECK(sup(prior_softmax(Scores{std::log(2.0), 0.0}, SimplexDistribution{0.5, 0.5}, 1.0)
                .distribution.weights(),
            vec({2.0 / 3, 1.0 / 3})) <= 1e-15);
  CHECK_THROWS_AS(prior_softmax(s, SimplexDistribution{1.0, 0.0, 0.0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(prior_softmax(s, SimplexDistribution::uniform(2), 1.0), InvalidArgument);
}

TEST_CASE("prior softmax is proportional to prior times exp(s / tau)") {
  Rng rng(30);
  for (int t = 0; t < 500; ++t) {
    const Index m = rng.integer(1, 12);
    const Vector s = rng.uniform_vector(m, -5.0, 5.0);
    const auto prior = rng.dirichlet(m);
    const double tau = rng.uniform(0.2, 3.0);
    Vector shifted(m);
    for (Index j = 0; j < m; ++j) shifted[j] = s[j] + tau * std::log(prior[j]);
    CHECK(sup(prior_softmax(Scores(s), prior, tau).distribution.weights(),
              testing::softmax_ld(shifted, tau)) <= 1e-13);
  }
}

TEST_CASE("lse and primal value examples") {
  for (Index m : {1, 2, 5, 40}) {
    CHECK(lse(Scores(Vector::Zero(m)), 0.7) ==
          doctest::Approx(0.7 * std::log(static_cast<double>(m))).epsilon(1e-15));
  }
  CHECK(lse(Scores{std::log(2.0), 0.0}, 1.0) == doctest::Approx(1.0986122886681097).epsilon(1e-15));
  CHECK(primal_value(Scores{0.0, 0.0}, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(primal_value(Scores{std::log(2.0), 0.0}, 1.0) ==
        doctest::Approx(-1.0986122886681097).epsilon(1e-15));
}

TEST_CASE("lse bounds and strong duality") {
  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    const Index m = rng.integer(1, 20);
    const Scores s(rng.uniform_vector(m, -5.0, 5.0));
    const double tau = rng.uniform(0.05, 5.0);
    const double l = lse(s, tau);
    const double top = s.values().maxCoeff();
    CHECK(l >= top - 1e-12);
    CHECK(l <= top + tau * std::log(static_cast<double>(m)) + 1e-12);
    CHECK(std::abs(primal_value(s, tau) + l) <= 1e-10);
  }
}

TEST_CASE("solve dispatches on the regularizer kind") {
  Rng rng(32);
  const Scores s(rng.uniform_vector(6, -3.0, 3.0));
  CHECK(solve(s, RegularizerSpec::shannon(1.3)).distribution.weights() ==
        softmax(s, 1.3).distribution.weights());
  CHECK(sup(solve(s, RegularizerSpec::tsallis(2.0)).distribution.weights(),
            sparsemax(s).distribution.weights()) <= 1e-10);
  CHECK(sup(solve(s, RegularizerSpec::kl_prior(0.4, SimplexDistribution::uniform(6)))
                .distribution.weights(),
            softmax(s, 0.4).distribution.weights()) <= 1e-12);
  CHECK(solve(s, RegularizerSpec::l2()).distribution.weights() ==
        sparsemax(s).distribution.weights());
  CHECK(solve(s, RegularizerSpec::linear_penalty(0.9, 0.2, 4)).distribution.weights() ==
        alibi_softmax(s, 4, 0.2, 0.9).distribution.weights());
  CHECK_THROWS_AS(solve(s, RegularizerSpec::kl_prior(1.0, SimplexDistribution::uniform(2))),
                  InvalidArgument);
}

TEST_CASE("potential is present exactly for the Shannon family") {
  const Scores s{0.2, 0.1};
  CHECK(solve(s, RegularizerSpec::shannon(1.0)).potential.has_value());
  CHECK(solve(s, RegularizerSpec::linear_penalty(1.0, 0.5, 1)).potential.has_value());
  CHECK(solve(s, RegularizerSpec::kl_prior(1.0, SimplexDistribution::uniform(2))).potential.has_value());
  CHECK_FALSE(solve(s, RegularizerSpec::l2()).potential.has_value());
  CHECK_FALSE(solve(s, RegularizerSpec::tsallis(1.5)).potential.has_value());
}

TEST_CASE("single key returns the unit vector for every solver") {
  const Scores s{-3.5};
  for (const auto& reg : {RegularizerSpec::shannon(0.5), RegularizerSpec::l2(),
                          RegularizerSpec::tsallis(3.0), RegularizerSpec::linear_penalty(1, 1, 1),
                          RegularizerSpec::kl_prior(1, SimplexDistribution{1.0})}) {
    CHECK(solve(s, reg).distribution[0] == 1.0);
  }
}

TEST_CASE("closed forms beat random simplex points") {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    const Index m = rng.integer(2, 8);
    const Scores s(rng.uniform_vector(m, -5.0, 5.0));
    const double tau = rng.uniform(0.2, 3.0);
    for (const auto& reg :
         {RegularizerSpec::shannon(tau), RegularizerSpec::l2(), RegularizerSpec::tsallis(1.5),
          RegularizerSpec::linear_penalty(tau, 0.3, rng.integer(1, m)),
          RegularizerSpec::kl_prior(tau, rng.dirichlet(m))}) {
      const double best = objective_value(solve(s, reg).distribution, s, reg);
      for (int k = 0; k < 50; ++k) {
        CHECK(best <= objective_value(rng.dirichlet(m), s, reg) + 1e-9);
      }
    }
  }
}

}  // TEST_SUITE
