#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ulab/nn.hpp"

namespace ulab {

/// Sum of absolute differences between two distributions.
double l1_distance(std::span<const double> p, std::span<const double> q);

/// KL(p || q) with q floored at kProbFloor; terms with p = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Max over queries of the L1 distance between the two models' softmax
/// outputs. Lies in [0, 2].
double eps_pred(const ModelParams& unlearned, const ModelParams& gold, std::span<const Example> queries);

/// Mean over queries of KL(gold || unlearned).
double kl_to_gold(const ModelParams& gold, const ModelParams& unlearned, std::span<const Example> queries);

/// Argmax accuracy; argmax ties go to the smallest class index.
double accuracy(const ModelParams& params, std::span<const Example> labeled);

std::size_t argmax(std::span<const double> p);

/// Global L2 distance over every scalar parameter, biases included.
double drift(const ModelParams& params, const ModelParams& params0);

/// Per-layer L2 displacement (weights and bias).
std::vector<double> layer_displacement(const ModelParams& params, const ModelParams& params0);

/// Q_l = ||dW_l||_F / (||W_l||_F + 1e-12) * 1e3 and A_l = ||dW_l||_F / sum_k ||dW_k||_F,
/// over weight matrices only. W_l is the pre-unlearning weight.
struct LayerDiagnostics {
  std::vector<double> Q;
  std::vector<double> A;
};

LayerDiagnostics layer_diagnostics(const ModelParams& params0, const ModelParams& params_final);

// ---------------------------------------------------------------------------
// Trajectories

struct StepRecord {
  std::size_t t = 0;
  std::optional<double> eps_pred;
  std::optional<double> d_kl;
  std::optional<double> acc;
  double drift = 0.0;
  std::vector<double> layer_displacement; // ||phi_t^(l) - phi_0^(l)||_2
  std::vector<double> step_norm;          // ||phi_t^(l) - phi_{t-1}^(l)||_2
  std::vector<double> grad_norm;          // ||g_t^(l)||_2 of the raw minibatch gradient
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::optional<double> eps_target;

  /// eps_pred of every step; throws if any step lacks one.
  std::vector<double> eps_series() const;
};

struct TrajectoryDiagnostics {
  std::size_t t_eps = 0;    // first index with eps <= target
  double overshoot = 0.0;   // max_{t >= t_eps} eps(t) - target, clamped at 0
  double oscillation = 0.0; // sum_{t >= t_eps} |eps(t+1) - eps(t)|
};

/// nullopt when the target is never reached.
std::optional<TrajectoryDiagnostics> trajectory_diagnostics(std::span<const double> eps, double eps_target);
std::optional<TrajectoryDiagnostics> trajectory_diagnostics(const Trajectory& traj, double eps_target);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation with average ranks for ties. Throws on length
/// mismatch, fewer than 3 points, or a constant argument.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace ulab
