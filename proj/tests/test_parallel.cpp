#include <doctest.h>

#include <omp.h>

#include "vattn/gradient.hpp"
#include "vattn/oracle.hpp"
#include "vattn/random.hpp"
#include "vattn/solvers.hpp"
#include "vattn/transport.hpp"
#include "vattn/verify.hpp"

using namespace vattn;

// OpenMP kernels must reproduce their serial references bit for bit.
TEST_SUITE("parallel") {

TEST_CASE("attention matrix") {
  Rng rng(71);
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    const QueryKeyBatch batch(rng.normal_matrix(33, 7), rng.normal_matrix(12, 7));
    CHECK(transport::attention_matrix(batch, 0.8).entries() ==
          transport::serial::attention_matrix(batch, 0.8).entries());
  }
}

TEST_CASE("full entropic transport solve") {
  Rng rng(72);
  omp_set_num_threads(3);
  const QueryKeyBatch batch(rng.normal_matrix(6, 4), rng.normal_matrix(5, 4));
  CHECK(transport::solve_full_eot(batch, 1.0).entries() ==
        transport::serial::solve_full_eot(batch, 1.0).entries());
}

TEST_CASE("grid search") {
  Rng rng(73);
  omp_set_num_threads(4);
  for (int t = 0; t < 10; ++t) {
    const Index m = rng.integer(2, 3);
    const Scores s(rng.uniform_vector(m, -2.0, 2.0));
    const auto reg = RegularizerSpec::shannon(rng.uniform(0.3, 2.0));
    const auto a = oracle::grid_search_simplex(s, reg, 400);
    const auto b = oracle::serial::grid_search_simplex(s, reg, 400);
    CHECK(a.distribution.weights() == b.distribution.weights());
    CHECK(a.objective == b.objective);
  }
  // Constant scores make mirror-image grid points tie exactly.
  const Scores flat{0.0, 0.0, 0.0};
  const auto reg = RegularizerSpec::l2();
  CHECK(oracle::grid_search_simplex(flat, reg, 301).distribution.weights() ==
        oracle::serial::grid_search_simplex(flat, reg, 301).distribution.weights());
}

TEST_CASE("finite differences") {
  Rng rng(74);
  omp_set_num_threads(4);
  const Vector x = rng.uniform_vector(9, -2.0, 2.0);
  const auto f = [](const Vector& y) { return solvers::lse(Scores(y), 0.6); };
  CHECK(gradient::finite_difference_gradient(f, x) ==
        gradient::serial::finite_difference_gradient(f, x));
  CHECK(gradient::finite_difference_hessian(f, x) ==
        gradient::serial::finite_difference_hessian(f, x));
}

TEST_CASE("verify reports do not depend on the job count") {
  verify::Options one{5, 6, 1, 1.0};
  verify::Options many{5, 6, 4, 1.0};
  for (const auto& name : {"closed-forms", "gradient-identities", "transport"}) {
    const auto a = verify::run_suite(name, one);
    const auto b = verify::run_suite(name, many);
    REQUIRE(a.per_check.size() == b.per_check.size());
    for (std::size_t k = 0; k < a.per_check.size(); ++k) {
      CHECK(a.per_check[k].name == b.per_check[k].name);
      CHECK(a.per_check[k].residual == b.per_check[k].residual);
      CHECK(a.per_check[k].passed == b.per_check[k].passed);
    }
  }
}

}  // TEST_SUITE
