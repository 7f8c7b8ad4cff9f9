#pragma once

// Data-parallel kernels over examples and matrix entries.
//
// Each kernel exists twice: a serial reference in ulab::kernels::serial and
// an OpenMP version in ulab::kernels::omp. The OpenMP versions parallelise
// the independent per-example (or per-entry) work and then reduce in index
// order, so both produce bitwise-identical results for any thread count.
// The unqualified names in ulab::kernels dispatch to the OpenMP versions
// when the library was built with OpenMP.

#include <cstddef>
#include <span>

#include "ulab/matrix.hpp"
#include "ulab/nn.hpp"

namespace ulab::kernels {

#define ULAB_KERNEL_DECLS                                                                         \
  /* out = sum_i grad_i; returns sum_i loss_i. */                                                 \
  double grad_sum(const ModelParams& params, std::span<const Example> batch, std::span<double> out); \
  /* out = sum_i grad_i * grad_i (elementwise). */                                                \
  void squared_grad_sum(const ModelParams& params, std::span<const Example> batch,                \
                        std::span<double> out);                                                   \
  /* out[i] = ||grad_i||_2. */                                                                    \
  void grad_norms(const ModelParams& params, std::span<const Example> batch, std::span<double> out); \
  /* out[i] = <grad_i, direction>. */                                                             \
  void grad_dots(const ModelParams& params, std::span<const Example> batch,                       \
                 std::span<const double> direction, std::span<double> out);                       \
  /* Softmax outputs, one row per example. */                                                     \
  Matrix predict(const ModelParams& params, std::span<const Example> batch);                      \
  /* (1/rows) W^T W for a row-major rows x cols matrix. */                                        \
  Matrix gram(std::span<const double> w, std::size_t rows, std::size_t cols);

namespace serial {
ULAB_KERNEL_DECLS
}

namespace omp {
ULAB_KERNEL_DECLS
/// Threads the OpenMP kernels will use (1 without OpenMP).
int max_threads();
}

#undef ULAB_KERNEL_DECLS

#ifdef ULAB_HAVE_OPENMP
using namespace omp;
#else
using namespace serial;
#endif

} // namespace ulab::kernels
