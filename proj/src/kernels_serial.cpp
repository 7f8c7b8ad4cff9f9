#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ulab/kernels.hpp"

namespace ulab::kernels::serial {

double grad_sum(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  if (out.size() != params.size()) throw std::invalid_argument("grad_sum: output size mismatch");
  std::vector<double> scratch(params.size());
  Backprop bp(params.spec);
  std::fill(out.begin(), out.end(), 0.0);
  double loss = 0.0;
  for (const auto& ex : batch) {
    loss += bp.gradient(params, ex, scratch);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += scratch[j];
  }
  return loss;
}

void squared_grad_sum(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  if (out.size() != params.size()) throw std::invalid_argument("squared_grad_sum: output size mismatch");
  std::vector<double> scratch(params.size());
  Backprop bp(params.spec);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& ex : batch) {
    bp.gradient(params, ex, scratch);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += scratch[j] * scratch[j];
  }
}

void grad_norms(const ModelParams& params, std::span<const Example> batch, std::span<double> out) {
  if (out.size() != batch.size()) throw std::invalid_argument("grad_norms: output size mismatch");
  std::vector<double> scratch(params.size());
  Backprop bp(params.spec);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    bp.gradient(params, batch[i], scratch);
    double s = 0.0;
    for (double v : scratch) s += v * v;
    out[i] = std::sqrt(s);
  }
}

void grad_dots(const ModelParams& params, std::span<const Example> batch, std::span<const double> direction,
               std::span<double> out) {
  if (out.size() != batch.size() || direction.size() != params.size())
    throw std::invalid_argument("grad_dots: size mismatch");
  std::vector<double> scratch(params.size());
  Backprop bp(params.spec);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    bp.gradient(params, batch[i], scratch);
    double s = 0.0;
    for (std::size_t j = 0; j < scratch.size(); ++j) s += scratch[j] * direction[j];
    out[i] = s;
  }
}

Matrix predict(const ModelParams& params, std::span<const Example> batch) {
  Matrix out(batch.size(), params.spec.num_classes);
  Backprop bp(params.spec);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto p = bp.forward(params, batch[i].x);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

Matrix gram(std::span<const double> w, std::size_t rows, std::size_t cols) {
  if (w.size() != rows * cols || rows == 0) throw std::invalid_argument("gram: bad matrix shape");
  Matrix c(cols, cols);
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t a = 0; a < cols; ++a) {
    for (std::size_t b = a; b < cols; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += w[i * cols + a] * w[i * cols + b];
      c(a, b) = s * inv;
      c(b, a) = c(a, b);
    }
  }
  return c;
}

} // namespace ulab::kernels::serial
