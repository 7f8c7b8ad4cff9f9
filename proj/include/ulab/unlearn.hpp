#pragma once

// Sensitivity-weighted gradient unlearning.
//
// Sensitivities are the mean squared per-example forget-set gradients at the
// pre-unlearning parameters, R_j = mean_i (dL_i/dphi_j)^2. They are max-
// normalised, Rbar_j = R_j / (max_k R_k + eps_R), optionally after a
// per-layer spectral gate R'_j = R_j * nu_l(j), and then held fixed for the
// whole run while minibatch steps phi_j <- phi_j - alpha * Rbar_j * g_j
// descend the forget-set loss.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ulab/metrics.hpp"
#include "ulab/nn.hpp"
#include "ulab/spectral.hpp"

namespace ulab {

enum class Variant { agu, sragu_full, sragu_lower_only, sragu_upper_only, sragu_nu_one };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
inline constexpr Variant kAllVariants[] = {Variant::agu, Variant::sragu_full, Variant::sragu_lower_only,
                                           Variant::sragu_upper_only, Variant::sragu_nu_one};

enum class StopCheck { per_step, per_epoch };
enum class StopReason { drift_below_kappa, max_steps, oracle_eps_target };
std::string_view to_string(StopReason r);
std::string_view to_string(StopCheck c);
StopCheck parse_stop_check(std::string_view name);

struct UnlearnConfig {
  double alpha = 0.01;
  double kappa = 1e-4;
  std::size_t max_steps = 120;
  double epsilon_r = 1e-12;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer{}; // learning_rate is overridden by alpha
  Variant variant = Variant::sragu_full;
  double tau = 0.1;
  double d1 = 2.0;
  double d2 = 2.0;
  double nu_floor = 0.5;
  std::optional<double> oracle_eps_target;
  bool disable_early_stop = false;
  StopCheck stop_check = StopCheck::per_step;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SensitivityMap {
  std::vector<double> raw;        // R_j
  std::vector<double> reweighted; // R'_j (equal to raw for agu)
  std::vector<double> normalized; // elementwise update scale in [0, 1]
  double epsilon_r = 1e-12;
  std::vector<double> layer_nu;         // gate applied to each layer
  std::vector<double> layer_max_weight; // max normalized weight inside each layer
};

/// Mean squared per-example gradient over the forget set.
std::vector<double> sensitivity(const ModelParams& params0, std::span<const Example> forget);

/// values / (max(values) + epsilon_r)
std::vector<double> normalize(std::span<const double> values, double epsilon_r);

/// Per-layer gates used by a variant: 1 for agu and sragu_nu_one,
/// nu_floor for layers whose fit failed, otherwise the variant's gate of xi.
std::vector<double> variant_gates(const SpectralProfile& profile, Variant variant);

SensitivityMap spectral_reweight(std::span<const double> raw, const std::vector<LayerSlice>& layout,
                                 const SpectralProfile& profile, Variant variant, double epsilon_r);

/// Optional per-step evaluation. With a gold model, eps_pred and D_KL are
/// logged against it on `queries`; with a nonempty `accuracy_set`, accuracy
/// is logged as well.
struct UnlearnEval {
  const ModelParams* gold = nullptr;
  std::span<const Example> queries;
  std::span<const Example> accuracy_set;
};

struct UnlearnResult {
  ModelParams final_params;
  Trajectory trajectory;
  std::size_t steps_taken = 0;
  StopReason stop_reason = StopReason::max_steps;
  SensitivityMap weights;
};

UnlearnResult run_unlearning(const ModelParams& params0, std::span<const Example> forget, const UnlearnConfig& cfg,
                             const SpectralProfile& profile, const UnlearnEval& eval = {});

} // namespace ulab
