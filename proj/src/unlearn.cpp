#include "ulab/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ulab/error.hpp"
#include "ulab/kernels.hpp"
#include "ulab/rng.hpp"

namespace ulab {

std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::agu: return "agu";
  case Variant::sragu_full: return "sragu_full";
  case Variant::sragu_lower_only: return "sragu_lower_only";
  case Variant::sragu_upper_only: return "sragu_upper_only";
  case Variant::sragu_nu_one: return "sragu_nu_one";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(StopReason r) {
  switch (r) {
  case StopReason::drift_below_kappa: return "drift_below_kappa";
  case StopReason::max_steps: return "max_steps";
  case StopReason::oracle_eps_target: return "oracle_eps_target";
  }
  return "?";
}

std::string_view to_string(StopCheck c) { return c == StopCheck::per_step ? "per_step" : "per_epoch"; }

StopCheck parse_stop_check(std::string_view name) {
  if (name == "per_step") return StopCheck::per_step;
  if (name == "per_epoch") return StopCheck::per_epoch;
  throw std::invalid_argument("unknown stop_check '" + std::string(name) + "'");
}

void UnlearnConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("unlearn: alpha must be >= 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("unlearn: kappa must be > 0");
  if (max_steps < 1) throw std::invalid_argument("unlearn: max_steps must be >= 1");
  if (!(epsilon_r > 0.0)) throw std::invalid_argument("unlearn: epsilon_r must be > 0");
  if (batch_size < 1) throw std::invalid_argument("unlearn: batch_size must be >= 1");
  if (oracle_eps_target && !(*oracle_eps_target > 0.0))
    throw std::invalid_argument("unlearn: oracle_eps_target must be > 0");
  optimizer.validate();
}

// ---------------------------------------------------------------------------

std::vector<double> sensitivity(const ModelParams& params0, std::span<const Example> forget) {
  if (forget.empty()) throw std::invalid_argument("sensitivity: empty forget set");
  for (const auto& ex : forget) check_example(params0.spec, ex);
  std::vector<double> r(params0.size());
  kernels::squared_grad_sum(params0, forget, r);
  const double inv = 1.0 / static_cast<double>(forget.size());
  for (double& v : r) v *= inv;
  return r;
}

std::vector<double> normalize(std::span<const double> values, double epsilon_r) {
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, v);
  const double denom = mx + epsilon_r;
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) out[j] = values[j] / denom;
  return out;
}

std::vector<double> variant_gates(const SpectralProfile& profile, Variant variant) {
  std::vector<double> nu(profile.layers.size(), 1.0);
  GateVariant gv;
  switch (variant) {
  case Variant::agu:
  case Variant::sragu_nu_one: return nu;
  case Variant::sragu_full: gv = GateVariant::full; break;
  case Variant::sragu_lower_only: gv = GateVariant::lower_only; break;
  case Variant::sragu_upper_only: gv = GateVariant::upper_only; break;
  default: return nu;
  }
  for (std::size_t l = 0; l < nu.size(); ++l) {
    const auto& lp = profile.layers[l];
    nu[l] = lp.fit_ok ? gate_value(gv, lp.xi, profile.d1, profile.d2) : profile.nu_floor;
  }
  return nu;
}

SensitivityMap spectral_reweight(std::span<const double> raw, const std::vector<LayerSlice>& layout,
                                 const SpectralProfile& profile, Variant variant, double epsilon_r) {
  const std::size_t P = layout.empty() ? 0 : layout.back().end();
  if (raw.size() != P) throw std::invalid_argument("spectral_reweight: sensitivity size mismatch");
  if (variant != Variant::agu && profile.layers.size() != layout.size())
    throw std::invalid_argument("spectral_reweight: profile covers " + std::to_string(profile.layers.size()) +
                                " layers, model has " + std::to_string(layout.size()));
  SensitivityMap m;
  m.epsilon_r = epsilon_r;
  m.raw.assign(raw.begin(), raw.end());
  if (variant == Variant::agu) {
    m.layer_nu.assign(layout.size(), 1.0);
    m.reweighted = m.raw;
  } else {
    m.layer_nu = variant_gates(profile, variant);
    m.reweighted.resize(P);
    for (std::size_t l = 0; l < layout.size(); ++l)
      for (std::size_t j = layout[l].begin(); j < layout[l].end(); ++j) m.reweighted[j] = m.raw[j] * m.layer_nu[l];
  }
  m.normalized = normalize(m.reweighted, epsilon_r);
  m.layer_max_weight.assign(layout.size(), 0.0);
  for (std::size_t l = 0; l < layout.size(); ++l)
    for (std::size_t j = layout[l].begin(); j < layout[l].end(); ++j)
      m.layer_max_weight[l] = std::max(m.layer_max_weight[l], m.normalized[j]);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> layer_norms(const std::vector<LayerSlice>& layout, std::span<const double> v) {
  std::vector<double> out(layout.size());
  for (std::size_t l = 0; l < layout.size(); ++l) {
    double s = 0.0;
    for (std::size_t j = layout[l].begin(); j < layout[l].end(); ++j) s += v[j] * v[j];
    out[l] = std::sqrt(s);
  }
  return out;
}

} // namespace

UnlearnResult run_unlearning(const ModelParams& params0, std::span<const Example> forget, const UnlearnConfig& cfg,
                             const SpectralProfile& profile, const UnlearnEval& eval) {
  cfg.validate();
  if (forget.empty()) throw std::invalid_argument("run_unlearning: empty forget set");
  if (cfg.oracle_eps_target && (eval.gold == nullptr || eval.queries.empty()))
    throw std::invalid_argument("run_unlearning: oracle_eps_target requires gold-model outputs");
  if (eval.gold && !eval.gold->same_shape(params0))
    throw std::invalid_argument("run_unlearning: gold model shape differs from the model being unlearned");

  UnlearnResult res;
  // Signal fixed at the pre-unlearning parameters for the whole trajectory.
  res.weights = spectral_reweight(sensitivity(params0, forget), params0.layout, profile, cfg.variant, cfg.epsilon_r);
  res.trajectory.eps_target = cfg.oracle_eps_target;
  res.final_params = params0;
  ModelParams& params = res.final_params;

  OptimizerConfig opt_cfg = cfg.optimizer;
  opt_cfg.learning_rate = cfg.alpha;
  Optimizer optimizer(opt_cfg, params.size());

  Matrix gold_probs;
  if (eval.gold && !eval.queries.empty()) gold_probs = kernels::predict(*eval.gold, eval.queries);

  Rng rng(derive_seed(cfg.seed, "unlearn_batches"));
  std::vector<std::size_t> order(forget.size());
  std::vector<Example> batch;
  Gradient g(params.spec);
  std::vector<double> prev(params.size());
  std::vector<double> delta(params.size());
  const bool early_stop = !cfg.disable_early_stop;

  std::size_t t = 0;
  std::optional<StopReason> stop;
  while (!stop) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(forget[order[i]]);

      kernels::grad_sum(params, batch, g.values);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (double& v : g.values) v *= inv;

      std::copy(params.values.begin(), params.values.end(), prev.begin());
      optimizer.step(params, g, res.weights.normalized);
      for (std::size_t j = 0; j < params.size(); ++j) {
        if (!std::isfinite(params.values[j]))
          throw NumericError("run_unlearning: non-finite parameter at step " + std::to_string(t));
        delta[j] = params.values[j] - prev[j];
      }

      StepRecord rec;
      rec.t = t;
      rec.drift = drift(params, params0);
      rec.layer_displacement = layer_displacement(params, params0);
      rec.step_norm = layer_norms(params.layout, delta);
      rec.grad_norm = layer_norms(params.layout, g.values);
      if (!gold_probs.data.empty()) {
        const Matrix pu = kernels::predict(params, eval.queries);
        double worst = 0.0, kl = 0.0;
        for (std::size_t i = 0; i < eval.queries.size(); ++i) {
          worst = std::max(worst, l1_distance(pu.row(i), gold_probs.row(i)));
          kl += kl_divergence(gold_probs.row(i), pu.row(i));
        }
        rec.eps_pred = worst;
        rec.d_kl = kl / static_cast<double>(eval.queries.size());
      }
      if (!eval.accuracy_set.empty()) rec.acc = accuracy(params, eval.accuracy_set);
      res.trajectory.steps.push_back(std::move(rec));
      const StepRecord& last = res.trajectory.steps.back();
      ++t;

      if (early_stop && cfg.oracle_eps_target && last.eps_pred && *last.eps_pred <= *cfg.oracle_eps_target)
        stop = StopReason::oracle_eps_target;
      else if (early_stop && cfg.stop_check == StopCheck::per_step && last.drift < cfg.kappa)
        stop = StopReason::drift_below_kappa;
      else if (t >= cfg.max_steps)
        stop = StopReason::max_steps;
    }
    if (!stop && early_stop && cfg.stop_check == StopCheck::per_epoch &&
        res.trajectory.steps.back().drift < cfg.kappa)
      stop = StopReason::drift_below_kappa;
  }
  res.steps_taken = t;
  res.stop_reason = *stop;
  return res;
}

} // namespace ulab
