#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/matrix.hpp"
#include "ulab/nn.hpp"

namespace ulab {

/// Labelled feature matrix with stable per-row identifiers.
struct Dataset {
  Matrix features; // N x d
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }

  std::vector<Example> examples() const;
  /// Examples for the given ids, in the given order. Throws on unknown ids.
  std::vector<Example> examples(std::span<const std::int64_t> wanted) const;
  Dataset subset(std::span<const std::int64_t> wanted) const;
  std::vector<std::size_t> class_counts() const;
};

/// Class c is centred on a signed, scaled coordinate axis; samples add
/// isotropic Gaussian noise with standard deviation `spread`. Ids start at
/// first_id so independently generated pools never collide.
Dataset gen_gaussian_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim, double spread,
                           std::uint64_t seed, std::int64_t first_id = 0);

/// Comma-separated file with a header row. Label values are mapped to
/// 0..K-1 in order of first appearance. Ids are 0-based data-row indices.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& numeric_columns);

/// Inverse of load_csv for generated data: header f0..f{d-1},label,id.
void save_csv(const Dataset& data, const std::string& path);

// ---------------------------------------------------------------------------
// Forget / retain splits

enum class DeletionStrategy { random, class_specific, high_loss, low_margin, high_grad_norm, influence };

std::string_view to_string(DeletionStrategy s);
DeletionStrategy parse_strategy(std::string_view name);
bool is_ranking_strategy(DeletionStrategy s);

struct ForgetSplit {
  DeletionStrategy strategy = DeletionStrategy::random;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> target_class;
  std::vector<std::int64_t> forget_ids; // sorted
  std::vector<std::int64_t> retain_ids; // sorted

  bool operator==(const ForgetSplit&) const = default;
};

/// round-half-up(ratio * n)
std::size_t forget_count(double ratio, std::size_t n);

ForgetSplit split_random(const Dataset& data, double ratio, std::uint64_t seed);

/// Forgets round(ratio * |class|) members of target_class, sampled
/// uniformly within the class when ratio < 1.
ForgetSplit split_class(const Dataset& data, int target_class, double ratio, std::uint64_t seed = 0);

/// Per-example scores computed once at the pre-unlearning parameters.
/// For low_margin the score is the margin p(1) - p(2) and the smallest
/// margins are selected; for every other rule the largest scores are.
struct RankingScores {
  std::vector<double> scores;
  DeletionStrategy rule = DeletionStrategy::high_loss;
  std::uint64_t tie_break_seed = 0;
};

RankingScores ranking_scores(const Dataset& data, const ModelParams& params0, DeletionStrategy rule,
                             std::uint64_t seed);

/// Indices of the k highest priorities; ties ordered by a seeded random
/// permutation.
std::vector<std::size_t> select_top(std::span<const double> priority, std::size_t k, std::uint64_t seed);

ForgetSplit rank_and_split(const Dataset& data, const ModelParams& params0, DeletionStrategy rule, double ratio,
                           std::uint64_t seed);

/// Confidence margin p(1) - p(2) of a probability vector.
double top2_margin(std::span<const double> probs);

} // namespace ulab
