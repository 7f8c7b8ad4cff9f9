#pragma once

// Experiment orchestration: config parsing, the per-seed pipeline
// (data -> train -> split -> gold retrain -> unlearn -> evaluate -> audit),
// and the CLI command implementations.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/audit.hpp"
#include "ulab/data.hpp"
#include "ulab/nn.hpp"
#include "ulab/spectral.hpp"
#include "ulab/unlearn.hpp"

namespace ulab {

struct DatasetConfig {
  std::string kind = "blobs"; // blobs | csv
  // blobs
  std::size_t n_per_class = 300;
  std::size_t num_classes = 3;
  std::size_t dim = 8;
  double spread = 1.0;
  std::size_t test_per_class = 100;
  std::size_t pool_per_class = 100;
  std::size_t shadow_per_class = 300; // shadow-train and shadow-test each
  // csv
  std::string path;
  std::string label_column;
  std::vector<std::string> numeric_columns;
  double test_fraction = 0.2;
  double pool_fraction = 0.1;
  double shadow_fraction = 0.2; // split evenly between shadow-train and shadow-test
};

struct TrainConfig {
  OptimizerConfig optimizer{OptimizerKind::sgd_momentum, 0.05, 0.9, 5e-4};
  std::size_t epochs = 80;
  std::size_t batch_size = 32;
};

struct DeletionConfig {
  DeletionStrategy strategy = DeletionStrategy::random;
  double ratio = 0.1;
  std::optional<int> target_class;
};

struct EvalConfig {
  double eps_target = 0.05;
  std::size_t query_limit = 0; // 0 = whole forget set
};

struct AuditConfig {
  bool enabled = false;
  std::size_t logreg_iterations = 2000;
  double logreg_learning_rate = 0.1;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::size_t> hidden_dims{32, 32};
  TrainConfig train;
  UnlearnConfig unlearn;
  DeletionConfig deletion;
  EvalConfig eval;
  AuditConfig audit;
  std::map<std::string, nlohmann::json> sweep; // axis name -> array of values
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output_dir = "runs/default";

  /// Strict parse; unknown keys and bad values throw ConfigError naming the key.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  std::string hash() const;
  void validate() const;
};

/// Applies one sweep axis value ("tau", "d", "d1", "d2", "alpha", "kappa",
/// "ratio", "variant", "strategy", "max_steps") to a config.
void apply_axis(ExperimentConfig& cfg, const std::string& axis, const nlohmann::json& value);

// ---------------------------------------------------------------------------
// Pipeline stages

/// Disjoint data partitions for one seed.
struct Corpus {
  Dataset train;        // the target model's full training set
  Dataset test;         // held-out accuracy set
  Dataset pool;         // non-members for the audit
  Dataset shadow_train; // shadow-model members
  Dataset shadow_test;  // shadow-model non-members
};

Corpus build_corpus(const DatasetConfig& cfg, std::uint64_t seed);
MlpSpec model_spec(const ExperimentConfig& cfg, const Dataset& data);

TrainResult train_original(const ExperimentConfig& cfg, const Dataset& train, std::uint64_t seed);
ForgetSplit make_split(const ExperimentConfig& cfg, const Dataset& train, const ModelParams& original,
                       std::uint64_t seed);
/// Fresh initialisation trained only on the retain ids.
TrainResult train_gold(const ExperimentConfig& cfg, const Dataset& train, const ForgetSplit& split,
                       std::uint64_t seed, AccessLog* log = nullptr);

/// Test examples from the retained distribution (the forgotten class is
/// excluded under class-specific deletion).
std::vector<Example> retained_test_examples(const ExperimentConfig& cfg, const Dataset& test,
                                            const ForgetSplit& split);

struct VariantRun {
  Variant variant = Variant::agu;
  UnlearnResult result;
  nlohmann::json report;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  ModelParams original;
  ModelParams gold;
  ForgetSplit split;
  SpectralProfile profile;
  std::vector<VariantRun> runs;
};

/// Evaluation report for one unlearned model.
nlohmann::json evaluate_run(const ExperimentConfig& cfg, const Corpus& corpus, const ForgetSplit& split,
                            const ModelParams& original, const ModelParams& unlearned, const ModelParams* gold,
                            const SpectralProfile& profile, const UnlearnResult* result);

AuditReport audit_model(const ExperimentConfig& cfg, const Corpus& corpus, const ForgetSplit& split,
                        const ModelParams& target, std::uint64_t seed);

/// Runs the whole pipeline for one seed and every listed variant. When
/// out_dir is nonempty, artifacts are written below it.
SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<Variant>& variants,
                     const std::string& out_dir = {});

// ---------------------------------------------------------------------------
// Aggregation

struct Aggregate {
  double mean = 0.0;
  double std = 0.0; // sample (n-1) standard deviation; 0 for a single value
  double min = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

Aggregate aggregate(const std::vector<double>& values);
nlohmann::json aggregate_to_json(const Aggregate& a);

/// Metrics aggregated over seeds for per-seed reports.
inline const std::vector<std::string> kReportMetrics = {"acc_retain", "eps_pred", "d_kl", "drift", "steps_taken"};

// ---------------------------------------------------------------------------
// Commands

struct CommandOptions {
  std::string out_dir; // overrides the config's output_dir when nonempty
  std::optional<std::uint64_t> seed;
  std::optional<Variant> variant;
  bool no_early_stop = false;
  std::string checkpoint; // explicit model for profile / audit / evaluate
};

/// Config with CLI overrides applied.
ExperimentConfig resolve(const ExperimentConfig& cfg, const CommandOptions& opts);

std::string cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_split(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_retrain_gold(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_unlearn(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_evaluate(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_profile(const ExperimentConfig& cfg, const CommandOptions& opts);
std::string cmd_audit(const ExperimentConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_ablate(const ExperimentConfig& cfg, const CommandOptions& opts);
nlohmann::json cmd_report(const ExperimentConfig& cfg, const CommandOptions& opts);

} // namespace ulab
