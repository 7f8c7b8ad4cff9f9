#pragma once

// Multilayer perceptron with ReLU hidden layers and a softmax head, trained
// with mean cross-entropy. Parameters live in one flat vector; per-layer
// weight (row-major, out x in) and bias blocks are views into it.

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace ulab {

enum class Activation { relu };

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  /// Throws std::invalid_argument when the architecture is malformed.
  void validate() const;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t in_dim(std::size_t layer) const;
  std::size_t out_dim(std::size_t layer) const;

  bool operator==(const MlpSpec&) const = default;
};

/// Position of one layer's weight and bias blocks inside the flat vector.
struct LayerSlice {
  std::size_t rows = 0; // out_dim
  std::size_t cols = 0; // in_dim
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t begin() const { return weight_offset; }
  std::size_t end() const { return bias_offset + rows; }
  std::size_t weight_size() const { return rows * cols; }

  bool operator==(const LayerSlice&) const = default;
};

std::vector<LayerSlice> make_layout(const MlpSpec& spec);

/// Flat parameter-shaped storage. ModelParams and Gradient are distinct types
/// sharing this layout so they cannot be mixed up at call sites.
template <typename Tag> struct ParamVector {
  MlpSpec spec;
  std::vector<LayerSlice> layout;
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(MlpSpec s) : spec(std::move(s)), layout(make_layout(spec)) {
    values.assign(layout.empty() ? 0 : layout.back().end(), 0.0);
  }

  std::size_t size() const { return values.size(); }
  std::size_t num_layers() const { return layout.size(); }

  std::span<double> weight(std::size_t l) {
    return {values.data() + layout[l].weight_offset, layout[l].weight_size()};
  }
  std::span<const double> weight(std::size_t l) const {
    return {values.data() + layout[l].weight_offset, layout[l].weight_size()};
  }
  std::span<double> bias(std::size_t l) { return {values.data() + layout[l].bias_offset, layout[l].rows}; }
  std::span<const double> bias(std::size_t l) const {
    return {values.data() + layout[l].bias_offset, layout[l].rows};
  }
  /// Weight and bias of layer l as one contiguous block.
  std::span<const double> layer(std::size_t l) const {
    return {values.data() + layout[l].begin(), layout[l].end() - layout[l].begin()};
  }

  /// Index of the layer that owns flat coordinate j.
  std::size_t layer_of(std::size_t j) const {
    for (std::size_t l = 0; l < layout.size(); ++l)
      if (j < layout[l].end()) return l;
    return layout.size();
  }

  template <typename Other> bool same_shape(const ParamVector<Other>& o) const {
    return spec == o.spec && values.size() == o.values.size();
  }

  bool operator==(const ParamVector&) const = default;
};

using ModelParams = ParamVector<struct ModelParamsTag>;
using Gradient = ParamVector<struct GradientTag>;

/// One labelled example; x views storage owned by a Dataset.
struct Example {
  std::span<const double> x;
  int label = 0;
  std::int64_t id = 0;
};

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

ModelParams init_params(const MlpSpec& spec, std::uint64_t seed);

std::vector<double> forward(const ModelParams& params, std::span<const double> x);

/// Mean clamped cross-entropy over a nonempty batch.
double loss(const ModelParams& params, std::span<const Example> batch);

/// Gradient of the mean cross-entropy over the batch.
Gradient grad(const ModelParams& params, std::span<const Example> batch);

Gradient per_example_grad(const ModelParams& params, const Example& example);

/// Scratch buffers for single-example backpropagation. Reusing one per
/// thread avoids allocation in the inner loops.
class Backprop {
public:
  explicit Backprop(const MlpSpec& spec);

  /// Softmax output for x; valid until the next call.
  std::span<const double> forward(const ModelParams& params, std::span<const double> x);

  /// Writes the single-example gradient into out (overwriting it) and
  /// returns the clamped cross-entropy loss of the example.
  double gradient(const ModelParams& params, const Example& ex, std::span<double> out);

private:
  std::vector<std::vector<double>> pre_;  // pre-activations per layer
  std::vector<std::vector<double>> post_; // activations per layer (post_[0] = input)
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

void check_example(const MlpSpec& spec, const Example& ex);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd_momentum, adaptive_moment_decoupled };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Optimizer state plus the update rule. An optional elementwise scale
/// multiplies the raw gradient before the optimizer transform.
class Optimizer {
public:
  Optimizer(OptimizerConfig cfg, std::size_t num_params);

  void step(ModelParams& params, const Gradient& g, std::span<const double> scale = {});

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return t_; }

private:
  OptimizerConfig cfg_;
  std::vector<double> m_; // momentum buffer / first moment
  std::vector<double> v_; // second moment
  std::vector<double> scaled_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

/// Records every example id read by a training loop.
struct AccessLog {
  std::set<std::int64_t> ids;
};

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AccessLog* access_log = nullptr;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss; // mean minibatch loss per epoch
};

TrainResult train(const MlpSpec& spec, std::span<const Example> data, const OptimizerConfig& opt,
                  const TrainOptions& options);

} // namespace ulab
