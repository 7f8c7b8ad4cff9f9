#include "ulab/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "ulab/kernels.hpp"
#include "ulab/rng.hpp"
#include "ulab/spectral.hpp"

namespace ulab {

AttackFeatures features_from_probs(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
    throw std::invalid_argument("extract_features: label out of range");
  AttackFeatures f;
  f.loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
  f.confidence = *std::max_element(probs.begin(), probs.end());
  for (double p : probs)
    if (p > 0.0) f.entropy -= p * std::log(p);
  f.margin = top2_margin(probs);
  return f;
}

AttackFeatures extract_features(const ModelParams& model, const Example& example) {
  check_example(model.spec, example);
  const auto p = forward(model, example.x);
  return features_from_probs(p, example.label);
}

namespace {

void append_features(Matrix& out, std::size_t first_row, const ModelParams& model, std::span<const Example> ex) {
  const Matrix p = kernels::predict(model, ex);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const auto f = features_from_probs(p.row(i), ex[i].label).as_array();
    std::copy(f.begin(), f.end(), out.row(first_row + i).begin());
  }
}

void require_disjoint(std::span<const Example> a, std::span<const Example> b, const char* what) {
  std::set<std::int64_t> ids;
  for (const auto& e : a) ids.insert(e.id);
  for (const auto& e : b)
    if (ids.count(e.id))
      throw std::invalid_argument(std::string(what) + ": example id " + std::to_string(e.id) + " appears on both sides");
}

void require_both_classes(std::span<const int> labels, const char* what) {
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  if (!pos || !neg) throw std::invalid_argument(std::string(what) + ": both classes must be present");
}

} // namespace

ShadowResult train_shadow(const ShadowRecipe& recipe, std::span<const Example> shadow_train,
                          std::span<const Example> shadow_test, std::uint64_t seed) {
  if (shadow_train.empty() || shadow_test.empty()) throw std::invalid_argument("train_shadow: empty shadow split");
  require_disjoint(shadow_train, shadow_test, "train_shadow");
  TrainOptions opts;
  opts.epochs = recipe.epochs;
  opts.batch_size = recipe.batch_size;
  opts.seed = derive_seed(seed, "shadow");
  ShadowResult r;
  r.params = train(recipe.spec, shadow_train, recipe.optimizer, opts).params;
  r.features = Matrix(shadow_train.size() + shadow_test.size(), 4);
  append_features(r.features, 0, r.params, shadow_train);
  append_features(r.features, shadow_train.size(), r.params, shadow_test);
  r.members.assign(shadow_train.size(), 1);
  r.members.resize(shadow_train.size() + shadow_test.size(), 0);
  return r;
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows == 0) throw std::invalid_argument("Standardizer: no rows");
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.scale.assign(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) s.mean[k] += x(i, k);
  for (double& m : s.mean) m /= static_cast<double>(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) s.scale[k] += (x(i, k) - s.mean[k]) * (x(i, k) - s.mean[k]);
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(x.rows));
    if (!(v > 0.0)) v = 1.0; // constant column
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols != mean.size()) throw std::invalid_argument("Standardizer: column count mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) out(i, k) = (x(i, k) - mean[k]) / scale[k];
  return out;
}

double logreg_score(std::span<const double> w, std::span<const double> row) {
  double z = w[0];
  for (std::size_t k = 0; k < row.size(); ++k) z += w[k + 1] * row[k];
  return sigmoid(z);
}

double logreg_loss(std::span<const double> w, const Matrix& x, std::span<const int> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double p = logreg_score(w, x.row(i));
    s -= labels[i] ? std::log(std::max(p, kProbFloor)) : std::log(std::max(1.0 - p, kProbFloor));
  }
  return s / static_cast<double>(x.rows);
}

std::vector<double> fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegOptions& options) {
  if (x.rows != labels.size() || x.rows == 0) throw std::invalid_argument("fit_logreg: shape mismatch");
  require_both_classes(labels, "fit_logreg");
  std::vector<double> w(x.cols + 1, 0.0);
  std::vector<double> g(w.size());
  const double inv = 1.0 / static_cast<double>(x.rows);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double r = logreg_score(w, x.row(i)) - static_cast<double>(labels[i] != 0);
      g[0] += r;
      for (std::size_t k = 0; k < x.cols; ++k) g[k + 1] += r * x(i, k);
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= options.learning_rate * g[k] * inv;
  }
  return w;
}

// ---------------------------------------------------------------------------

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  require_both_classes(labels, "auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]]) {
        pos_rank_sum += rank;
        ++n_pos;
      }
    i = j + 1;
  }
  const double P = static_cast<double>(n_pos);
  const double N = static_cast<double>(scores.size() - n_pos);
  const double u = pos_rank_sum - P * (P + 1.0) / 2.0;
  return u / (P * N);
}

double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double fpr_budget) {
  if (scores.size() != labels.size()) throw std::invalid_argument("tpr_at_fpr: size mismatch");
  require_both_classes(labels, "tpr_at_fpr");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  auto count_above = [](const std::vector<double>& v, double tau) {
    return static_cast<double>(v.end() - std::upper_bound(v.begin(), v.end(), tau));
  };
  const double n_neg = static_cast<double>(neg.size());
  const double allowed = fpr_budget * n_neg + 1e-9;
  // Candidate thresholds in increasing order: below every score, then each
  // distinct score. FPR is non-increasing in tau, so the first admissible
  // candidate maximises TPR.
  if (n_neg <= allowed) return 1.0;
  std::vector<double> all(scores.begin(), scores.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  for (double tau : all)
    if (count_above(neg, tau) <= allowed) return count_above(pos, tau) / static_cast<double>(pos.size());
  return 0.0;
}

AuditReport run_audit(const ModelParams& target, std::span<const Example> forget,
                      std::span<const Example> nonmember_pool, const ShadowSetup& shadow, std::uint64_t seed) {
  require_disjoint(forget, nonmember_pool, "run_audit");
  if (forget.size() < kMinAuditPool || nonmember_pool.size() < kMinAuditPool)
    throw std::invalid_argument("run_audit: need at least " + std::to_string(kMinAuditPool) +
                                " positives and negatives");
  const std::size_t n = std::min(forget.size(), nonmember_pool.size());
  Rng rng(derive_seed(seed, "audit_balance"));
  auto take = [&](std::span<const Example> pool) {
    std::vector<Example> out;
    if (pool.size() == n) return std::vector<Example>(pool.begin(), pool.end());
    auto perm = rng.permutation(pool.size());
    perm.resize(n);
    std::sort(perm.begin(), perm.end());
    for (auto i : perm) out.push_back(pool[i]);
    return out;
  };
  const auto positives = take(forget);
  const auto negatives = take(nonmember_pool);

  const auto sh = train_shadow(shadow.recipe, shadow.shadow_train, shadow.shadow_test, seed);
  const auto standardizer = Standardizer::fit(sh.features);
  const auto w = fit_logreg(standardizer.apply(sh.features), sh.members, shadow.logreg);

  Matrix q(2 * n, 4);
  append_features(q, 0, target, positives);
  append_features(q, n, target, negatives);
  q = standardizer.apply(q);

  AuditReport rep;
  rep.seed = seed;
  rep.n_pos = n;
  rep.n_neg = n;
  rep.labels.assign(n, 1);
  rep.labels.resize(2 * n, 0);
  rep.scores.resize(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) rep.scores[i] = logreg_score(w, q.row(i));
  rep.auc = auc(rep.scores, rep.labels);
  rep.tpr_at_1pct_fpr = tpr_at_fpr(rep.scores, rep.labels, 0.01);
  return rep;
}

} // namespace ulab
