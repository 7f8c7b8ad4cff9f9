#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "ulab/data.hpp"
#include "ulab/error.hpp"
#include "ulab/metrics.hpp"

using namespace ulab;
using namespace testing;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

// Central finite differences of the mean batch loss.
std::vector<double> finite_diff(ModelParams p, std::span<const Example> batch, double h = 1e-6) {
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double v = p.values[j];
    p.values[j] = v + h;
    const double up = loss(p, batch);
    p.values[j] = v - h;
    const double dn = loss(p, batch);
    p.values[j] = v;
    g[j] = (up - dn) / (2 * h);
  }
  return g;
}

} // namespace

TEST_SUITE("nn") {

TEST_CASE("layer shapes chain through the spec") {
  const auto spec = make_spec(4, {8, 8}, 3);
  const auto p = init_params(spec, 0);
  REQUIRE(p.num_layers() == 3);
  CHECK(p.layout[0].rows == 8);
  CHECK(p.layout[0].cols == 4);
  CHECK(p.layout[1].rows == 8);
  CHECK(p.layout[1].cols == 8);
  CHECK(p.layout[2].rows == 3);
  CHECK(p.layout[2].cols == 8);
  CHECK(p.size() == 8 * 4 + 8 + 8 * 8 + 8 + 3 * 8 + 3);
  for (std::size_t j = 0; j < p.size(); ++j) CHECK(p.layer_of(j) < 3);
}

TEST_CASE("initialisation is seeded, bounded and has zero biases") {
  const auto spec = make_spec(2, {3}, 2);
  CHECK(init_params(spec, 7) == init_params(spec, 7));
  CHECK(init_params(spec, 7) != init_params(spec, 8));
  const auto p = init_params(make_spec(5, {16, 9}, 4), 3);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (double b : p.bias(l)) CHECK(b == 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layout[l].cols));
    for (double w : p.weight(l)) CHECK(std::abs(w) <= bound);
  }
}

TEST_CASE("malformed specs are rejected") {
  CHECK_THROWS_AS(make_spec(0, {3}, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_spec(2, {}, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_spec(2, {0}, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_spec(2, {3}, 1).validate(), std::invalid_argument);
}

TEST_CASE("softmax output") {
  const auto spec = make_spec(3, {5}, 4);
  SUBCASE("zero head gives the uniform distribution") {
    auto p = random_params(spec, 1);
    for (double& w : p.weight(1)) w = 0.0;
    for (double& b : p.bias(1)) b = 0.0;
    for (double v : forward(p, std::vector<double>{1.0, -2.0, 0.5})) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("matches a long-double oracle and sums to one") {
    ExampleSet s;
    random_examples(s, 50, 3, 4, 2);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = random_params(spec, seed, 1.0);
      for (const auto& e : s.ex) {
        const auto got = forward(p, e.x);
        const auto want = oracle_forward(p, e.x);
        double sum = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          CHECK(std::abs(got[k] - static_cast<double>(want[k])) < 1e-12);
          sum += got[k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("huge logits stay finite") {
    auto p = random_params(spec, 4, 1e3);
    for (double v : forward(p, std::vector<double>{10.0, -10.0, 3.0})) CHECK(std::isfinite(v));
  }
}

TEST_CASE("cross-entropy values") {
  const auto spec = make_spec(2, {3}, 2);
  auto p = random_params(spec, 5);
  for (double& w : p.weight(1)) w = 0.0;
  ExampleSet s;
  s.add({0.3, -0.1}, 0);
  s.add({1.0, 2.0}, 0);
  SUBCASE("uniform predictor gives ln K") {
    for (double& b : p.bias(1)) b = 0.0;
    CHECK(loss(p, s.ex) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("p(correct) = 1/4 gives ln 4") {
    p.bias(1)[0] = 0.0;
    p.bias(1)[1] = std::log(3.0);
    CHECK(loss(p, s.ex) == doctest::Approx(1.386294361).epsilon(1e-9));
  }
  SUBCASE("confident correct prediction gives near-zero loss") {
    p.bias(1)[0] = 40.0;
    p.bias(1)[1] = -40.0;
    CHECK(loss(p, s.ex) < 1e-12);
  }
  SUBCASE("confidently wrong prediction is clamped") {
    p.bias(1)[0] = -400.0;
    p.bias(1)[1] = 400.0;
    CHECK(loss(p, s.ex) == doctest::Approx(-std::log(kProbFloor)));
  }
}

TEST_CASE("backprop agrees with central finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = make_spec(2, {4}, 2);
    const auto p = random_params(spec, 100 + seed);
    ExampleSet s;
    random_examples(s, 3, 2, 2, 200 + seed);
    const auto g = grad(p, s.ex);
    const auto fd = finite_diff(p, s.ex);
    for (std::size_t j = 0; j < p.size(); ++j) CHECK(rel_err(g.values[j], fd[j]) <= 1e-4);
  }
}

TEST_CASE("batch gradient is the mean of per-example gradients") {
  const auto spec = make_spec(3, {6, 5}, 3);
  const auto p = random_params(spec, 9);
  ExampleSet s;
  random_examples(s, 7, 3, 3, 10);
  const auto g = grad(p, s.ex);
  std::vector<double> mean(p.size(), 0.0);
  for (const auto& e : s.ex) {
    const auto gi = per_example_grad(p, e);
    for (std::size_t j = 0; j < p.size(); ++j) mean[j] += gi.values[j] / 7.0;
  }
  for (std::size_t j = 0; j < p.size(); ++j) CHECK(std::abs(g.values[j] - mean[j]) < 1e-10);

  const auto single = grad(p, std::span(s.ex).first(1));
  CHECK(single.values == per_example_grad(p, s.ex[0]).values);
}

TEST_CASE("correct confident prediction has a vanishing gradient") {
  const auto spec = make_spec(2, {3}, 2);
  auto p = random_params(spec, 12);
  for (double& w : p.weight(1)) w = 0.0;
  p.bias(1)[0] = 40.0;
  p.bias(1)[1] = -40.0;
  ExampleSet s;
  s.add({0.5, 0.5}, 0);
  double n2 = 0;
  for (double v : per_example_grad(p, s.ex[0]).values) n2 += v * v;
  CHECK(std::sqrt(n2) < 1e-6);
}

TEST_CASE("malformed examples are rejected") {
  const auto spec = make_spec(2, {3}, 2);
  const auto p = init_params(spec, 0);
  ExampleSet s;
  s.add({1.0, 2.0, 3.0}, 0);
  CHECK_THROWS_AS(per_example_grad(p, s.ex[0]), std::invalid_argument);
  ExampleSet t;
  t.add({1.0, 2.0}, 5);
  CHECK_THROWS_AS(loss(p, t.ex), std::invalid_argument);
  CHECK_THROWS_AS(grad(p, std::span<const Example>{}), std::invalid_argument);
}

TEST_CASE("optimizer updates") {
  const auto spec = make_spec(2, {3}, 2);
  const auto p0 = random_params(spec, 1);
  Gradient g(spec);
  Rng rng(2);
  for (double& v : g.values) v = rng.normal();
  OptimizerConfig plain;
  plain.learning_rate = 0.1;

  SUBCASE("zero scale leaves parameters unchanged") {
    for (auto cfg : {plain, OptimizerConfig{OptimizerKind::adaptive_moment_decoupled, 0.1}}) {
      auto p = p0;
      Optimizer opt(cfg, p.size());
      opt.step(p, g, std::vector<double>(p.size(), 0.0));
      CHECK(p == p0);
    }
  }
  SUBCASE("plain SGD is phi - lr g") {
    auto p = p0;
    Optimizer opt(plain, p.size());
    opt.step(p, g, std::vector<double>(p.size(), 1.0));
    for (std::size_t j = 0; j < p.size(); ++j) CHECK(p.values[j] == p0.values[j] - 0.1 * g.values[j]);
  }
  SUBCASE("half scale gives half the displacement") {
    auto a = p0, b = p0;
    Optimizer oa(plain, a.size()), ob(plain, b.size());
    oa.step(a, g);
    ob.step(b, g, std::vector<double>(b.size(), 0.5));
    for (std::size_t j = 0; j < a.size(); ++j)
      CHECK(std::abs((b.values[j] - p0.values[j]) - 0.5 * (a.values[j] - p0.values[j])) < 1e-15);
  }
  SUBCASE("momentum with coupled weight decay") {
    OptimizerConfig cfg{OptimizerKind::sgd_momentum, 0.1, 0.9, 0.01};
    auto p = p0;
    Optimizer opt(cfg, p.size());
    opt.step(p, g);
    opt.step(p, g);
    for (std::size_t j = 0; j < p.size(); ++j) {
      double phi = p0.values[j], m = 0.0;
      for (int t = 0; t < 2; ++t) {
        m = 0.9 * m + (g.values[j] + 0.01 * phi);
        phi -= 0.1 * m;
      }
      CHECK(p.values[j] == doctest::Approx(phi).epsilon(1e-14));
    }
  }
  SUBCASE("decoupled adaptive moments") {
    OptimizerConfig cfg{OptimizerKind::adaptive_moment_decoupled, 0.01, 0.0, 0.1, 0.9, 0.999, 1e-8};
    auto p = p0;
    Optimizer opt(cfg, p.size());
    const std::vector<double> scale(p.size(), 0.5);
    for (int t = 0; t < 3; ++t) opt.step(p, g, scale);
    for (std::size_t j = 0; j < p.size(); ++j) {
      double phi = p0.values[j], m = 0, v = 0;
      for (int t = 1; t <= 3; ++t) {
        const double d = 0.5 * g.values[j];
        phi -= 0.01 * 0.1 * phi;
        m = 0.9 * m + 0.1 * d;
        v = 0.999 * v + 0.001 * d * d;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        phi -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      }
      CHECK(p.values[j] == doctest::Approx(phi).epsilon(1e-12));
    }
  }
  SUBCASE("bad configurations") {
    CHECK_THROWS_AS(Optimizer(OptimizerConfig{OptimizerKind::sgd_momentum, -1.0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(Optimizer(OptimizerConfig{OptimizerKind::sgd_momentum, 0.1, 1.5}, 3), std::invalid_argument);
    auto p = p0;
    Optimizer opt(plain, p.size());
    CHECK_THROWS_AS(opt.step(p, g, std::vector<double>(2, 1.0)), std::invalid_argument);
  }
}

TEST_CASE("training") {
  const auto data = gen_gaussian_blobs(50, 2, 2, 0.3, 4);
  const auto ex = data.examples();
  const auto spec = make_spec(2, {16}, 2);
  OptimizerConfig opt{OptimizerKind::sgd_momentum, 0.05, 0.9};
  TrainOptions options{50, 16, 1};

  SUBCASE("separable blobs are learned") {
    const auto r = train(spec, ex, opt, options);
    CHECK(accuracy(r.params, ex) >= 0.99);
    CHECK(r.epoch_loss.size() == 50);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  }
  SUBCASE("same seed gives identical parameters") {
    CHECK(train(spec, ex, opt, options).params == train(spec, ex, opt, options).params);
    TrainOptions other = options;
    other.seed = 2;
    CHECK(train(spec, ex, opt, options).params != train(spec, ex, opt, other).params);
  }
  SUBCASE("access log records exactly the training ids") {
    AccessLog log;
    TrainOptions o = options;
    o.epochs = 2;
    o.access_log = &log;
    train(spec, ex, opt, o);
    CHECK(log.ids.size() == ex.size());
    for (const auto& e : ex) CHECK(log.ids.count(e.id) == 1);
  }
  SUBCASE("zero epochs and empty data are rejected") {
    TrainOptions o = options;
    o.epochs = 0;
    CHECK_THROWS_AS(train(spec, ex, opt, o), std::invalid_argument);
    CHECK_THROWS_AS(train(spec, std::span<const Example>{}, opt, options), std::invalid_argument);
  }
  SUBCASE("divergence is reported as a numeric failure") {
    OptimizerConfig wild{OptimizerKind::sgd_momentum, 1e300};
    CHECK_THROWS_AS(train(spec, ex, wild, options), NumericError);
  }
}

}
