#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ulab/nn.hpp"
#include "ulab/rng.hpp"

namespace testing {

using namespace ulab;

/// Examples that own their feature storage.
struct ExampleSet {
  std::vector<std::vector<double>> xs;
  std::vector<Example> ex;

  ExampleSet() = default;
  ExampleSet(const ExampleSet&) = delete;
  ExampleSet& operator=(const ExampleSet&) = delete;

  void add(std::vector<double> x, int label) {
    xs.push_back(std::move(x));
    labels.push_back(label);
    rebuild();
  }

  void rebuild() {
    ex.clear();
    for (std::size_t i = 0; i < xs.size(); ++i)
      ex.push_back({xs[i], labels[i], static_cast<std::int64_t>(i)});
  }

  std::vector<int> labels;
};

inline void random_examples(ExampleSet& s, std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  s.xs.clear();
  s.labels.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();
    s.xs.push_back(std::move(x));
    s.labels.push_back(static_cast<int>(rng.below(classes)));
  }
  s.rebuild();
}

/// Parameters with standard-normal entries scaled by `scale` (biases too).
inline ModelParams random_params(const MlpSpec& spec, std::uint64_t seed, double scale = 0.5) {
  ModelParams p(spec);
  Rng rng(seed);
  for (double& v : p.values) v = scale * rng.normal();
  return p;
}

inline MlpSpec make_spec(std::size_t in, std::vector<std::size_t> hidden, std::size_t k) {
  MlpSpec s;
  s.input_dim = in;
  s.hidden_dims = std::move(hidden);
  s.num_classes = k;
  return s;
}

/// Forward pass in long double with plain loops; independent of the library.
inline std::vector<long double> oracle_forward(const ModelParams& p, std::span<const double> x) {
  std::vector<long double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto& s = p.layout[l];
    std::vector<long double> z(s.rows);
    for (std::size_t i = 0; i < s.rows; ++i) {
      long double acc = p.values[s.bias_offset + i];
      for (std::size_t j = 0; j < s.cols; ++j) acc += (long double)p.values[s.weight_offset + i * s.cols + j] * a[j];
      z[i] = acc;
    }
    if (l + 1 < p.num_layers())
      for (auto& v : z) v = v > 0 ? v : 0;
    a = std::move(z);
  }
  long double mx = a[0];
  for (auto v : a) mx = std::max(mx, v);
  long double sum = 0;
  for (auto& v : a) sum += (v = std::exp(v - mx));
  for (auto& v : a) v /= sum;
  return a;
}

} // namespace testing
