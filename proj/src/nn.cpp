#include "ulab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ulab/error.hpp"
#include "ulab/kernels.hpp"
#include "ulab/rng.hpp"

namespace ulab {

void MlpSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
  if (hidden_dims.empty()) throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
  for (auto h : hidden_dims)
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden dimensions must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("MlpSpec: num_classes must be >= 2");
}

std::size_t MlpSpec::in_dim(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::out_dim(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : num_classes;
}

std::vector<LayerSlice> make_layout(const MlpSpec& spec) {
  std::vector<LayerSlice> out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    LayerSlice s;
    s.rows = spec.out_dim(l);
    s.cols = spec.in_dim(l);
    s.weight_offset = offset;
    s.bias_offset = offset + s.rows * s.cols;
    offset = s.end();
    out.push_back(s);
  }
  return out;
}

ModelParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p(spec);
  Rng rng(derive_seed(seed, "init"));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layout[l].cols));
    for (double& w : p.weight(l)) w = rng.uniform(-bound, bound);
  }
  return p;
}

void check_example(const MlpSpec& spec, const Example& ex) {
  if (ex.x.size() != spec.input_dim)
    throw std::invalid_argument("input has dimension " + std::to_string(ex.x.size()) + ", expected " +
                                std::to_string(spec.input_dim));
  if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= spec.num_classes)
    throw std::invalid_argument("label " + std::to_string(ex.label) + " out of range [0, " +
                                std::to_string(spec.num_classes) + ")");
}

// ---------------------------------------------------------------------------

Backprop::Backprop(const MlpSpec& spec) {
  const std::size_t L = spec.num_layers();
  pre_.resize(L);
  post_.resize(L + 1);
  post_[0].resize(spec.input_dim);
  std::size_t widest = spec.input_dim;
  for (std::size_t l = 0; l < L; ++l) {
    pre_[l].resize(spec.out_dim(l));
    post_[l + 1].resize(spec.out_dim(l));
    widest = std::max(widest, spec.out_dim(l));
  }
  delta_.resize(widest);
  delta_prev_.resize(widest);
}

std::span<const double> Backprop::forward(const ModelParams& params, std::span<const double> x) {
  const std::size_t L = params.num_layers();
  std::copy(x.begin(), x.end(), post_[0].begin());
  for (std::size_t l = 0; l < L; ++l) {
    const LayerSlice& s = params.layout[l];
    const double* W = params.values.data() + s.weight_offset;
    const double* b = params.values.data() + s.bias_offset;
    const std::vector<double>& in = post_[l];
    std::vector<double>& z = pre_[l];
    for (std::size_t i = 0; i < s.rows; ++i) {
      double acc = b[i];
      const double* wi = W + i * s.cols;
      for (std::size_t k = 0; k < s.cols; ++k) acc += wi[k] * in[k];
      z[i] = acc;
    }
    std::vector<double>& a = post_[l + 1];
    if (l + 1 < L) {
      for (std::size_t i = 0; i < s.rows; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
    } else {
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t i = 0; i < s.rows; ++i) {
        a[i] = std::exp(z[i] - zmax);
        sum += a[i];
      }
      for (std::size_t i = 0; i < s.rows; ++i) a[i] /= sum;
    }
  }
  return post_[L];
}

double Backprop::gradient(const ModelParams& params, const Example& ex, std::span<double> out) {
  const std::size_t L = params.num_layers();
  const std::span<const double> p = forward(params, ex.x);
  const double loss = -std::log(std::max(p[static_cast<std::size_t>(ex.label)], kProbFloor));

  // Softmax + cross-entropy: dL/dz = p - onehot(y).
  for (std::size_t k = 0; k < p.size(); ++k) delta_[k] = p[k];
  delta_[static_cast<std::size_t>(ex.label)] -= 1.0;

  for (std::size_t l = L; l-- > 0;) {
    const LayerSlice& s = params.layout[l];
    const std::vector<double>& in = post_[l];
    double* gW = out.data() + s.weight_offset;
    double* gb = out.data() + s.bias_offset;
    for (std::size_t i = 0; i < s.rows; ++i) {
      const double d = delta_[i];
      double* gwi = gW + i * s.cols;
      for (std::size_t k = 0; k < s.cols; ++k) gwi[k] = d * in[k];
      gb[i] = d;
    }
    if (l == 0) break;
    const double* W = params.values.data() + s.weight_offset;
    const std::vector<double>& zprev = pre_[l - 1];
    for (std::size_t k = 0; k < s.cols; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.rows; ++i) acc += W[i * s.cols + k] * delta_[i];
      // ReLU subgradient at 0 is 0.
      delta_prev_[k] = zprev[k] > 0.0 ? acc : 0.0;
    }
    std::swap(delta_, delta_prev_);
  }
  return loss;
}

// ---------------------------------------------------------------------------

std::vector<double> forward(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.spec.input_dim)
    throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(params.spec.input_dim));
  Backprop bp(params.spec);
  auto p = bp.forward(params, x);
  return {p.begin(), p.end()};
}

namespace {

void check_batch(const ModelParams& params, std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (const auto& ex : batch) check_example(params.spec, ex);
}

} // namespace

double loss(const ModelParams& params, std::span<const Example> batch) {
  check_batch(params, batch);
  Backprop bp(params.spec);
  double sum = 0.0;
  for (const auto& ex : batch) {
    auto p = bp.forward(params, ex.x);
    sum += -std::log(std::max(p[static_cast<std::size_t>(ex.label)], kProbFloor));
  }
  return sum / static_cast<double>(batch.size());
}

Gradient grad(const ModelParams& params, std::span<const Example> batch) {
  check_batch(params, batch);
  Gradient g(params.spec);
  kernels::grad_sum(params, batch, g.values);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : g.values) v *= inv;
  return g;
}

Gradient per_example_grad(const ModelParams& params, const Example& example) {
  check_example(params.spec, example);
  Gradient g(params.spec);
  Backprop bp(params.spec);
  bp.gradient(params, example, g.values);
  return g;
}

// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("optimizer: learning_rate must be a finite nonnegative number");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optimizer: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer: beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer: beta2 must be in (0,1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be > 0");
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t num_params) : cfg_(cfg) {
  cfg_.validate();
  m_.assign(num_params, 0.0);
  if (cfg_.kind == OptimizerKind::adaptive_moment_decoupled) v_.assign(num_params, 0.0);
  scaled_.resize(num_params);
}

void Optimizer::step(ModelParams& params, const Gradient& g, std::span<const double> scale) {
  const std::size_t n = params.size();
  if (!params.same_shape(g) || n != m_.size()) throw std::invalid_argument("optimizer_step: shape mismatch");
  if (!scale.empty() && scale.size() != n) throw std::invalid_argument("optimizer_step: scale shape mismatch");

  // The elementwise scale acts on the raw gradient, ahead of momentum or
  // moment estimation.
  if (scale.empty()) {
    std::copy(g.values.begin(), g.values.end(), scaled_.begin());
  } else {
    for (std::size_t j = 0; j < n; ++j) scaled_[j] = scale[j] * g.values[j];
  }
  ++t_;
  double* phi = params.values.data();
  const double lr = cfg_.learning_rate;

  if (cfg_.kind == OptimizerKind::sgd_momentum) {
    const double mu = cfg_.momentum;
    const double wd = cfg_.weight_decay;
    for (std::size_t j = 0; j < n; ++j) {
      double d = scaled_[j];
      if (wd != 0.0) d += wd * phi[j];
      m_[j] = mu != 0.0 ? mu * m_[j] + d : d;
      phi[j] -= lr * m_[j];
    }
    return;
  }

  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t j = 0; j < n; ++j) {
    if (cfg_.weight_decay != 0.0) phi[j] -= lr * cfg_.weight_decay * phi[j];
    const double d = scaled_[j];
    m_[j] = b1 * m_[j] + (1.0 - b1) * d;
    v_[j] = b2 * v_[j] + (1.0 - b2) * d * d;
    const double mhat = m_[j] / bc1;
    const double vhat = v_[j] / bc2;
    phi[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
  }
}

// ---------------------------------------------------------------------------

TrainResult train(const MlpSpec& spec, std::span<const Example> data, const OptimizerConfig& opt,
                  const TrainOptions& options) {
  spec.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (options.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (options.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  for (const auto& ex : data) check_example(spec, ex);

  TrainResult result{init_params(spec, options.seed), {}};
  ModelParams& params = result.params;
  Optimizer optimizer(opt, params.size());
  Rng shuffle_rng(derive_seed(options.seed, "shuffle"));

  std::vector<std::size_t> order(data.size());
  std::vector<Example> batch;
  batch.reserve(options.batch_size);
  Gradient g(spec);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(data[order[i]]);
        if (options.access_log) options.access_log->ids.insert(data[order[i]].id);
      }
      const double batch_loss = kernels::grad_sum(params, batch, g.values);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (double& v : g.values) v *= inv;
      optimizer.step(params, g);
      loss_sum += batch_loss * inv;
      ++batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(epoch_loss) ||
        std::any_of(params.values.begin(), params.values.end(), [](double v) { return !std::isfinite(v); }))
      throw NumericError("train: divergence at epoch " + std::to_string(epoch + 1) +
                         " (mean loss = " + std::to_string(epoch_loss) + ")");
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

} // namespace ulab
