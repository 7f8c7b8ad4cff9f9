#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "support.hpp"
#include "ulab/kernels.hpp"

using namespace ulab;
using namespace testing;

namespace {

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel kernels are bitwise equal to the serial reference") {
  const auto spec = make_spec(6, {17, 9}, 4);
  const auto p = random_params(spec, 3);
  ExampleSet s;
  random_examples(s, 1031, 6, 4, 8);
  std::vector<double> direction(p.size());
  Rng rng(1);
  for (double& d : direction) d = rng.normal();

  std::vector<double> ref_g(p.size()), ref_sq(p.size()), ref_n(s.ex.size()), ref_d(s.ex.size());
  const double ref_loss = kernels::serial::grad_sum(p, s.ex, ref_g);
  kernels::serial::squared_grad_sum(p, s.ex, ref_sq);
  kernels::serial::grad_norms(p, s.ex, ref_n);
  kernels::serial::grad_dots(p, s.ex, direction, ref_d);
  const Matrix ref_pred = kernels::serial::predict(p, s.ex);
  const Matrix ref_gram = kernels::serial::gram(p.weight(1), 9, 17);

  for (int threads : {1, 2, 3, 8}) {
    CAPTURE(threads);
    set_threads(threads);
    std::vector<double> g(p.size()), sq(p.size()), n(s.ex.size()), d(s.ex.size());
    CHECK(kernels::omp::grad_sum(p, s.ex, g) == ref_loss);
    kernels::omp::squared_grad_sum(p, s.ex, sq);
    kernels::omp::grad_norms(p, s.ex, n);
    kernels::omp::grad_dots(p, s.ex, direction, d);
    CHECK(g == ref_g);
    CHECK(sq == ref_sq);
    CHECK(n == ref_n);
    CHECK(d == ref_d);
    CHECK(kernels::omp::predict(p, s.ex) == ref_pred);
    CHECK(kernels::omp::gram(p.weight(1), 9, 17) == ref_gram);
  }
  set_threads(kernels::omp::max_threads());
}

TEST_CASE("kernel sums match per-example accumulation") {
  const auto spec = make_spec(3, {5}, 3);
  const auto p = random_params(spec, 4);
  ExampleSet s;
  random_examples(s, 9, 3, 3, 5);
  std::vector<double> g(p.size()), sq(p.size()), n(9);
  kernels::serial::grad_sum(p, s.ex, g);
  kernels::serial::squared_grad_sum(p, s.ex, sq);
  kernels::serial::grad_norms(p, s.ex, n);
  std::vector<double> g2(p.size(), 0.0), sq2(p.size(), 0.0);
  for (std::size_t i = 0; i < 9; ++i) {
    const auto gi = per_example_grad(p, s.ex[i]);
    double nn = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      g2[j] += gi.values[j];
      sq2[j] += gi.values[j] * gi.values[j];
      nn += gi.values[j] * gi.values[j];
    }
    CHECK(n[i] == doctest::Approx(std::sqrt(nn)).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < p.size(); ++j) {
    CHECK(std::abs(g[j] - g2[j]) < 1e-12);
    CHECK(std::abs(sq[j] - sq2[j]) < 1e-12);
  }
}

}
