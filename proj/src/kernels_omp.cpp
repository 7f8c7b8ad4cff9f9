#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ulab/kernels.hpp"

#ifdef ULAB_HAVE_OPENMP
#include <omp.h>
#endif

namespace ulab::kernels::omp {

namespace {

// Examples per block for kernels that buffer per-example gradients. Bounds
// scratch memory at kBlock * num_params doubles.
constexpr std::size_t kBlock = 256;

// Per-example gradients of batch[begin, end) into rows of buf, losses into
// loss. Work items are independent; each thread owns one Backprop.
void block_gradients(const ModelParams& params, std::span<const Example> batch, std::size_t begin,
                     std::size_t end, std::vector<double>& buf, std::vector<double>& loss) {
  const std::size_t P = params.size();
  const long count = static_cast<long>(end - begin);
#pragma omp parallel
  {
    Backprop bp(params.spec);
#pragma omp for schedule(static)
    for (long k = 0; k < count; ++k) {
      const std::size_t i = begin + static_cast<std::size_t>(k);
      std::span<double> row(buf.data() + static_cast<std::size_t>(k) * P, P);
      loss[static_cast<std::size_t>(k)] = bp.gradient(params, batch[i], row);
    }
  }
}

} // namespace

int max_threads() {
#ifdef ULAB_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double grad_sum(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  const std::size_t P = params.size();
  if (out.size() != P) throw std::invalid_argument("grad_sum: output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> buf(std::min(kBlock, batch.size()) * P);
  std::vector<double> loss(std::min(kBlock, batch.size()));
  double total = 0.0;
  for (std::size_t begin = 0; begin < batch.size(); begin += kBlock) {
    const std::size_t end = std::min(batch.size(), begin + kBlock);
    block_gradients(params, batch, begin, end, buf, loss);
    // Ordered reduction keeps the result identical to the serial kernel.
    for (std::size_t k = 0; k < end - begin; ++k) {
      total += loss[k];
      const double* row = buf.data() + k * P;
      for (std::size_t j = 0; j < P; ++j) out[j] += row[j];
    }
  }
  return total;
}

void squared_grad_sum(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  const std::size_t P = params.size();
  if (out.size() != P) throw std::invalid_argument("squared_grad_sum: output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> buf(std::min(kBlock, batch.size()) * P);
  std::vector<double> loss(std::min(kBlock, batch.size()));
  for (std::size_t begin = 0; begin < batch.size(); begin += kBlock) {
    const std::size_t end = std::min(batch.size(), begin + kBlock);
    block_gradients(params, batch, begin, end, buf, loss);
    for (std::size_t k = 0; k < end - begin; ++k) {
      const double* row = buf.data() + k * P;
      for (std::size_t j = 0; j < P; ++j) out[j] += row[j] * row[j];
    }
  }
}

void grad_norms(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  if (out.size() != batch.size()) throw std::invalid_argument("grad_norms: output size mismatch");
  const long n = static_cast<long>(batch.size());
#pragma omp parallel
  {
    Backprop bp(params.spec);
    std::vector<double> scratch(params.size());
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      bp.gradient(params, batch[static_cast<std::size_t>(i)], scratch);
      double s = 0.0;
      for (double v : scratch) s += v * v;
      out[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
  }
}

void grad_dots(const ModelParams& params, std::span<const Example> batch, std::span<const double> direction,
               std::span<double> out) {
  if (out.size() != batch.size() || direction.size() != params.size())
    throw std::invalid_argument("grad_dots: size mismatch");
  const long n = static_cast<long>(batch.size());
#pragma omp parallel
  {
    Backprop bp(params.spec);
    std::vector<double> scratch(params.size());
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      bp.gradient(params, batch[static_cast<std::size_t>(i)], scratch);
      double s = 0.0;
      for (std::size_t j = 0; j < scratch.size(); ++j) s += scratch[j] * direction[j];
      out[static_cast<std::size_t>(i)] = s;
    }
  }
}

Matrix predict(const ModelParams& params, std::span<const Example> batch) {
  Matrix out(batch.size(), params.spec.num_classes);
  const long n = static_cast<long>(batch.size());
#pragma omp parallel
  {
    Backprop bp(params.spec);
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      auto p = bp.forward(params, batch[static_cast<std::size_t>(i)].x);
      std::copy(p.begin(), p.end(), out.row(static_cast<std::size_t>(i)).begin());
    }
  }
  return out;
}

Matrix gram(std::span<const double> w, std::size_t rows, std::size_t cols) {
  if (w.size() != rows * cols || rows == 0) throw std::invalid_argument("gram: bad matrix shape");
  Matrix c(cols, cols);
  const double inv = 1.0 / static_cast<double>(rows);
  const long n = static_cast<long>(cols);
#pragma omp parallel for schedule(dynamic)
  for (long sa = 0; sa < n; ++sa) {
    const std::size_t a = static_cast<std::size_t>(sa);
    for (std::size_t b = a; b < cols; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += w[i * cols + a] * w[i * cols + b];
      c(a, b) = s * inv;
    }
  }
  for (std::size_t a = 0; a < cols; ++a)
    for (std::size_t b = a + 1; b < cols; ++b) c(b, a) = c(a, b);
  return c;
}

} // namespace ulab::kernels::omp
