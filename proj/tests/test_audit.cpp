#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "ulab/audit.hpp"

using namespace ulab;
using namespace testing;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

// Every threshold: below all scores and at each score.
double brute_tpr(const std::vector<double>& s, const std::vector<int>& y, double budget) {
  std::vector<double> taus{-1e300};
  taus.insert(taus.end(), s.begin(), s.end());
  double best = 0.0;
  for (double tau : taus) {
    double tp = 0, fp = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      (y[i] ? p : n) += 1;
      if (s[i] > tau) (y[i] ? tp : fp) += 1;
    }
    if (fp / n <= budget) best = std::max(best, tp / p);
  }
  return best;
}

} // namespace

TEST_SUITE("audit") {

TEST_CASE("attack features") {
  const auto u = features_from_probs(std::vector<double>{0.5, 0.5}, 1);
  CHECK(u.confidence == 0.5);
  CHECK(u.entropy == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(u.margin == 0.0);
  const auto f = features_from_probs(std::vector<double>{0.7, 0.2, 0.1}, 0);
  CHECK(f.loss == doctest::Approx(0.356675).epsilon(1e-6));
  CHECK(f.margin == doctest::Approx(0.5));
  CHECK(f.entropy == doctest::Approx(0.801819).epsilon(1e-6));
  const auto c = features_from_probs(std::vector<double>{1 - 1e-15, 1e-15}, 0);
  CHECK(c.loss < 1e-12);
  CHECK(c.margin == doctest::Approx(1.0));
  CHECK_THROWS(features_from_probs(std::vector<double>{0.5, 0.5}, 2));
}

TEST_CASE("auc") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 1, 0, 0}) == 0.5);
  CHECK(auc(std::vector<double>{0.9, 0.3, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0}) == 0.75);
  CHECK_THROWS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(11);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 5) / 5; // plenty of ties
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(auc(s, y) == brute_auc(s, y));
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
    CHECK(auc(t, y) == auc(s, y));
    std::vector<int> flip(n);
    for (std::size_t i = 0; i < n; ++i) flip[i] = 1 - y[i];
    CHECK(auc(s, flip) == doctest::Approx(1.0 - auc(s, y)).epsilon(1e-15));
  }
}

TEST_CASE("tpr at a false-positive budget") {
  CHECK(tpr_at_fpr(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}, 0.01) == 1.0);
  CHECK(tpr_at_fpr(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}, 0.0) == 1.0);
  CHECK(tpr_at_fpr(std::vector<double>(10, 0.3), std::vector<int>{1, 1, 1, 1, 1, 0, 0, 0, 0, 0}, 0.01) == 0.0);

  Rng rng(5);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = i < 100;
    s[i] = std::round((rng.normal() + (y[i] ? 1.0 : 0.0)) * 20) / 20;
  }
  for (double budget : {0.0, 0.01, 0.05, 0.1, 0.5}) CHECK(tpr_at_fpr(s, y, budget) == brute_tpr(s, y, budget));

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(30);
    std::vector<double> t(n);
    std::vector<int> z(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::floor(rng.uniform() * 8);
      z[i] = static_cast<int>(rng.below(2));
    }
    z[0] = 1;
    z[1] = 0;
    CHECK(tpr_at_fpr(t, z, 0.01) == brute_tpr(t, z, 0.01));
    CHECK(tpr_at_fpr(t, z, 0.25) == brute_tpr(t, z, 0.25));
  }
}

TEST_CASE("logistic regression attacker") {
  Matrix x(40, 1);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = i % 2;
    x(i, 0) = (y[i] ? 1.0 : -1.0) * (1.0 + 0.05 * static_cast<double>(i));
  }
  const auto sx = Standardizer::fit(x).apply(x);
  const auto w = fit_logreg(sx, y);
  CHECK(w.size() == 2);
  CHECK(logreg_loss(w, sx, y) < 0.1);

  Matrix dup(80, 1);
  std::vector<int> ydup(80);
  for (std::size_t i = 0; i < 40; ++i) {
    dup(2 * i, 0) = dup(2 * i + 1, 0) = sx(i, 0);
    ydup[2 * i] = ydup[2 * i + 1] = y[i];
  }
  const auto wd = fit_logreg(dup, ydup);
  for (std::size_t k = 0; k < 2; ++k) CHECK(wd[k] == doctest::Approx(w[k]).epsilon(1e-10));

  CHECK_THROWS(fit_logreg(sx, std::vector<int>(40, 1)));

  Matrix c(3, 2);
  c(0, 0) = 1;
  c(1, 0) = 2;
  c(2, 0) = 3;
  const auto st = Standardizer::fit(c);
  CHECK(st.mean[0] == 2.0);
  CHECK(st.scale[1] == 1.0); // constant column
}

TEST_CASE("shadow model and full audit") {
  const auto spec = make_spec(2, {8}, 2);
  ExampleSet a, b, pool;
  random_examples(a, 30, 2, 2, 1);
  random_examples(b, 30, 2, 2, 2);
  random_examples(pool, 25, 2, 2, 3);
  for (std::size_t i = 0; i < 30; ++i) b.ex[i].id += 100;
  for (std::size_t i = 0; i < 25; ++i) pool.ex[i].id += 200;
  const ShadowRecipe recipe{spec, {OptimizerKind::sgd_momentum, 0.05, 0.9}, 10, 8};

  const auto sh = train_shadow(recipe, a.ex, b.ex, 4);
  CHECK(sh.features.rows == 60);
  CHECK(sh.features.cols == 4);
  CHECK(sh.members[0] == 1);
  CHECK(sh.members[59] == 0);
  CHECK(train_shadow(recipe, a.ex, b.ex, 4).features == sh.features);
  CHECK_THROWS(train_shadow(recipe, a.ex, a.ex, 4));

  const auto target = random_params(spec, 9);
  ExampleSet forget;
  random_examples(forget, 15, 2, 2, 7);
  for (auto& e : forget.ex) e.id += 300;
  const ShadowSetup setup{recipe, a.ex, b.ex, {}};
  const auto rep = run_audit(target, forget.ex, pool.ex, setup, 11);
  CHECK(rep.n_pos == 15);
  CHECK(rep.n_neg == 15);
  CHECK(rep.scores.size() == 30);
  CHECK((rep.auc >= 0.0 && rep.auc <= 1.0));
  const auto again = run_audit(target, forget.ex, pool.ex, setup, 11);
  CHECK(again.scores == rep.scores);

  CHECK_THROWS(run_audit(target, forget.ex, forget.ex, setup, 1));
  CHECK_THROWS(run_audit(target, std::span(forget.ex).first(5), pool.ex, setup, 1));
}

}
