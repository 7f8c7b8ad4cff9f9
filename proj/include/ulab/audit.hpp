#pragma once

// Black-box membership-inference audit. A shadow model trained with the
// target's recipe supplies labelled (member / non-member) feature rows; a
// logistic-regression attacker fitted on them scores the target's queries.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ulab/data.hpp"
#include "ulab/matrix.hpp"
#include "ulab/nn.hpp"

namespace ulab {

struct AttackFeatures {
  double loss = 0.0;
  double confidence = 0.0;
  double entropy = 0.0;
  double margin = 0.0;

  std::array<double, 4> as_array() const { return {loss, confidence, entropy, margin}; }
};

AttackFeatures features_from_probs(std::span<const double> probs, int label);
AttackFeatures extract_features(const ModelParams& model, const Example& example);

struct ShadowRecipe {
  MlpSpec spec;
  OptimizerConfig optimizer;
  std::size_t epochs = 80;
  std::size_t batch_size = 32;
};

struct ShadowResult {
  ModelParams params;
  Matrix features;          // one row per query, 4 columns
  std::vector<int> members; // 1 for shadow-train rows, 0 for shadow-test rows
};

ShadowResult train_shadow(const ShadowRecipe& recipe, std::span<const Example> shadow_train,
                          std::span<const Example> shadow_test, std::uint64_t seed);

/// Per-column z-score with statistics from the attacker's training rows.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

struct LogRegOptions {
  std::size_t iterations = 2000;
  double learning_rate = 0.1;
};

/// Full-batch gradient descent on the mean log-loss. Returns the intercept
/// followed by one weight per feature column.
std::vector<double> fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegOptions& options = {});

double logreg_score(std::span<const double> weights, std::span<const double> row);
double logreg_loss(std::span<const double> weights, const Matrix& x, std::span<const int> labels);

/// Area under the ROC curve as the rank statistic P(s+ > s-) + 0.5 P(tie).
double auc(std::span<const double> scores, std::span<const int> labels);

/// TPR at the smallest threshold tau whose FPR (fraction of negatives with
/// score > tau) is within the budget; members are predicted when score > tau.
double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double fpr_budget = 0.01);

struct AuditReport {
  double auc = 0.5;
  double tpr_at_1pct_fpr = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
  std::vector<double> scores; // target query scores, positives first
  std::vector<int> labels;
};

struct ShadowSetup {
  ShadowRecipe recipe;
  std::span<const Example> shadow_train;
  std::span<const Example> shadow_test;
  LogRegOptions logreg{};
};

inline constexpr std::size_t kMinAuditPool = 10;

/// Positives are the forget examples, negatives a disjoint non-member pool;
/// the larger side is subsampled (seeded) to balance them.
AuditReport run_audit(const ModelParams& target, std::span<const Example> forget,
                      std::span<const Example> nonmember_pool, const ShadowSetup& shadow, std::uint64_t seed);

} // namespace ulab
