// Serial reference vs OpenMP kernel timings. Thread count follows
// OMP_NUM_THREADS; with one thread the pairs should be within noise.

#include <benchmark/benchmark.h>

#include "vattn/gradient.hpp"
#include "vattn/oracle.hpp"
#include "vattn/random.hpp"
#include "vattn/solvers.hpp"
#include "vattn/transport.hpp"

namespace {

using namespace vattn;

QueryKeyBatch make_batch(Index n, Index m, Index d) {
  Rng rng(1);
  return QueryKeyBatch(rng.normal_matrix(n, d), rng.normal_matrix(m, d));
}

void BM_AttentionMatrix_Serial(benchmark::State& st) {
  const auto batch = make_batch(st.range(0), st.range(0), 64);
  for (auto _ : st) benchmark::DoNotOptimize(transport::serial::attention_matrix(batch, 8.0));
}

void BM_AttentionMatrix_OpenMP(benchmark::State& st) {
  const auto batch = make_batch(st.range(0), st.range(0), 64);
  for (auto _ : st) benchmark::DoNotOptimize(transport::attention_matrix(batch, 8.0));
}

void BM_FullEot_Serial(benchmark::State& st) {
  const auto batch = make_batch(st.range(0), 16, 16);
  for (auto _ : st) benchmark::DoNotOptimize(transport::serial::solve_full_eot(batch, 4.0));
}

void BM_FullEot_OpenMP(benchmark::State& st) {
  const auto batch = make_batch(st.range(0), 16, 16);
  for (auto _ : st) benchmark::DoNotOptimize(transport::solve_full_eot(batch, 4.0));
}

const Scores kGridScores{0.3, -0.8, 1.1};

void BM_GridSearch_Serial(benchmark::State& st) {
  const auto reg = RegularizerSpec::shannon(1.0);
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        oracle::serial::grid_search_simplex(kGridScores, reg, static_cast<int>(st.range(0))));
  }
}

void BM_GridSearch_OpenMP(benchmark::State& st) {
  const auto reg = RegularizerSpec::shannon(1.0);
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        oracle::grid_search_simplex(kGridScores, reg, static_cast<int>(st.range(0))));
  }
}

gradient::ScalarFunction lse_fn() {
  return [](const Vector& x) { return solvers::lse(Scores(x), 1.0); };
}

void BM_FdHessian_Serial(benchmark::State& st) {
  const Vector x = Rng(2).uniform_vector(st.range(0), -2.0, 2.0);
  const auto f = lse_fn();
  for (auto _ : st) benchmark::DoNotOptimize(gradient::serial::finite_difference_hessian(f, x));
}

void BM_FdHessian_OpenMP(benchmark::State& st) {
  const Vector x = Rng(2).uniform_vector(st.range(0), -2.0, 2.0);
  const auto f = lse_fn();
  for (auto _ : st) benchmark::DoNotOptimize(gradient::finite_difference_hessian(f, x));
}

void BM_FdGradient_Serial(benchmark::State& st) {
  const Vector x = Rng(3).uniform_vector(st.range(0), -2.0, 2.0);
  const auto f = lse_fn();
  for (auto _ : st) benchmark::DoNotOptimize(gradient::serial::finite_difference_gradient(f, x));
}

void BM_FdGradient_OpenMP(benchmark::State& st) {
  const Vector x = Rng(3).uniform_vector(st.range(0), -2.0, 2.0);
  const auto f = lse_fn();
  for (auto _ : st) benchmark::DoNotOptimize(gradient::finite_difference_gradient(f, x));
}

}  // namespace

BENCHMARK(BM_AttentionMatrix_Serial)->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionMatrix_OpenMP)->Arg(64)->Arg(256);
BENCHMARK(BM_FullEot_Serial)->Arg(8)->Arg(32);
BENCHMARK(BM_FullEot_OpenMP)->Arg(8)->Arg(32);
BENCHMARK(BM_GridSearch_Serial)->Arg(500)->Arg(2000);
BENCHMARK(BM_GridSearch_OpenMP)->Arg(500)->Arg(2000);
BENCHMARK(BM_FdHessian_Serial)->Arg(16)->Arg(64);
BENCHMARK(BM_FdHessian_OpenMP)->Arg(16)->Arg(64);
BENCHMARK(BM_FdGradient_Serial)->Arg(64)->Arg(512);
BENCHMARK(BM_FdGradient_OpenMP)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
