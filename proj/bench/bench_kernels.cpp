// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "ulab/data.hpp"
#include "ulab/kernels.hpp"
#include "ulab/nn.hpp"

using namespace ulab;

namespace {

struct Workload {
  Dataset data;
  std::vector<Example> ex;
  ModelParams params;

  explicit Workload(std::size_t n) : data(gen_gaussian_blobs(n / 3, 3, 8, 1.0, 1)), ex(data.examples()) {
    MlpSpec spec;
    spec.input_dim = 8;
    spec.hidden_dims = {64, 64};
    spec.num_classes = 3;
    params = init_params(spec, 2);
  }
};

template <auto Fn> void grad_sum(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)));
  std::vector<double> out(w.params.size());
  for (auto _ : st) benchmark::DoNotOptimize(Fn(w.params, w.ex, out));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.ex.size()));
}

template <auto Fn> void squared_grad_sum(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)));
  std::vector<double> out(w.params.size());
  for (auto _ : st) {
    Fn(w.params, w.ex, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.ex.size()));
}

template <auto Fn> void predict(benchmark::State& st) {
  const Workload w(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(Fn(w.params, w.ex));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.ex.size()));
}

template <auto Fn> void gram(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  std::vector<double> w(n * n);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(i % 17) - 8.0;
  for (auto _ : st) benchmark::DoNotOptimize(Fn(w, n, n));
}

} // namespace

BENCHMARK(grad_sum<kernels::serial::grad_sum>)->Name("grad_sum/serial")->Arg(900)->Arg(9000);
BENCHMARK(grad_sum<kernels::omp::grad_sum>)->Name("grad_sum/omp")->Arg(900)->Arg(9000)->UseRealTime();
BENCHMARK(squared_grad_sum<kernels::serial::squared_grad_sum>)->Name("squared_grad_sum/serial")->Arg(900)->Arg(9000);
BENCHMARK(squared_grad_sum<kernels::omp::squared_grad_sum>)
    ->Name("squared_grad_sum/omp")
    ->Arg(900)
    ->Arg(9000)
    ->UseRealTime();
BENCHMARK(predict<kernels::serial::predict>)->Name("predict/serial")->Arg(900)->Arg(9000);
BENCHMARK(predict<kernels::omp::predict>)->Name("predict/omp")->Arg(900)->Arg(9000)->UseRealTime();
BENCHMARK(gram<kernels::serial::gram>)->Name("gram/serial")->Arg(64)->Arg(256);
BENCHMARK(gram<kernels::omp::gram>)->Name("gram/omp")->Arg(64)->Arg(256)->UseRealTime();

BENCHMARK_MAIN();
