// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include "bnnp/kernels.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/rng.hpp"

using namespace bnnp;

namespace {

ArchSpec bench_arch() {
  ArchSpec a;
  a.layer_sizes = {64, 64, 10};
  a.activation = Activation::relu;
  a.head = OutputHead::softmax;
  return a;
}

template <bool Parallel>
void BM_forward_rows(benchmark::State& state) {
  const Mlp net(bench_arch());
  Rng rng(1);
  const ParamVector w = net.init_he(rng);
  const RowMatrix X = rng.normal_matrix(state.range(0), 64);
  for (auto _ : state) {
    RowMatrix out = Parallel ? kernels::forward_rows(net, w, X) : kernels::serial::forward_rows(net, w, X);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_rbf_gram(benchmark::State& state) {
  Rng rng(2);
  const RowMatrix A = rng.normal_matrix(state.range(0), 100);
  const RowMatrix B = rng.normal_matrix(state.range(0), 100);
  for (auto _ : state) {
    Matrix K = Parallel ? kernels::rbf_gram(A, B, 1.5) : kernels::serial::rbf_gram(A, B, 1.5);
    benchmark::DoNotOptimize(K.data());
  }
}

template <bool Parallel>
void BM_pairwise_sq_dists(benchmark::State& state) {
  Rng rng(3);
  const RowMatrix A = rng.normal_matrix(state.range(0), 100);
  for (auto _ : state) {
    std::vector<double> d = Parallel ? kernels::pairwise_sq_dists(A) : kernels::serial::pairwise_sq_dists(A);
    benchmark::DoNotOptimize(d.data());
  }
}

template <bool Parallel>
void BM_sum_rows(benchmark::State& state) {
  const Mlp net(bench_arch());
  Rng rng(4);
  const ParamVector w = net.init_he(rng);
  const RowMatrix X = rng.normal_matrix(state.range(0), 64);
  const Vector up = Vector::Ones(10);
  auto row = [&](Index i, Vector* g) {
    if (g) net.accumulate_grad_params(w, X.row(i).transpose(), up, 1.0, *g);
    return net.forward(w, X.row(i).transpose()).sum();
  };
  for (auto _ : state) {
    Vector grad = Vector::Zero(net.param_count());
    const double v = Parallel ? kernels::sum_rows(X.rows(), net.param_count(), &grad, row)
                              : kernels::serial::sum_rows(X.rows(), net.param_count(), &grad, row);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_forward_rows<false>)->Arg(256)->Arg(4096);
BENCHMARK(BM_forward_rows<true>)->Arg(256)->Arg(4096);
BENCHMARK(BM_rbf_gram<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_rbf_gram<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_pairwise_sq_dists<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_pairwise_sq_dists<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_sum_rows<false>)->Arg(256)->Arg(2048);
BENCHMARK(BM_sum_rows<true>)->Arg(256)->Arg(2048);

BENCHMARK_MAIN();
