#include "ulab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ulab/kernels.hpp"

namespace ulab {

double l1_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("l1_distance: size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::fabs(p[k] - q[k]);
  return s;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    s += p[k] * (std::log(std::max(p[k], kProbFloor)) - std::log(std::max(q[k], kProbFloor)));
  }
  // Rounding can leave tiny negatives for near-identical distributions.
  return std::max(s, 0.0);
}

namespace {

void check_pair(const ModelParams& a, const ModelParams& b, std::span<const Example> queries) {
  if (queries.empty()) throw std::invalid_argument("empty query set");
  if (a.spec.num_classes != b.spec.num_classes || a.spec.input_dim != b.spec.input_dim)
    throw std::invalid_argument("models disagree on input or output dimension");
}

} // namespace

double eps_pred(const ModelParams& unlearned, const ModelParams& gold, std::span<const Example> queries) {
  check_pair(unlearned, gold, queries);
  const Matrix pu = kernels::predict(unlearned, queries);
  const Matrix pg = kernels::predict(gold, queries);
  double worst = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) worst = std::max(worst, l1_distance(pu.row(i), pg.row(i)));
  return worst;
}

double kl_to_gold(const ModelParams& gold, const ModelParams& unlearned, std::span<const Example> queries) {
  check_pair(unlearned, gold, queries);
  const Matrix pu = kernels::predict(unlearned, queries);
  const Matrix pg = kernels::predict(gold, queries);
  double s = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) s += kl_divergence(pg.row(i), pu.row(i));
  return s / static_cast<double>(queries.size());
}

std::size_t argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

double accuracy(const ModelParams& params, std::span<const Example> labeled) {
  if (labeled.empty()) throw std::invalid_argument("accuracy: empty set");
  const Matrix p = kernels::predict(params, labeled);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (argmax(p.row(i)) == static_cast<std::size_t>(labeled[i].label)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

double drift(const ModelParams& params, const ModelParams& params0) {
  if (!params.same_shape(params0)) throw std::invalid_argument("drift: shape mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double d = params.values[j] - params0.values[j];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> layer_displacement(const ModelParams& params, const ModelParams& params0) {
  if (!params.same_shape(params0)) throw std::invalid_argument("layer_displacement: shape mismatch");
  std::vector<double> out(params.num_layers());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto a = params.layer(l);
    const auto b = params0.layer(l);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    out[l] = std::sqrt(s);
  }
  return out;
}

LayerDiagnostics layer_diagnostics(const ModelParams& params0, const ModelParams& params_final) {
  if (!params0.same_shape(params_final)) throw std::invalid_argument("layer_diagnostics: shape mismatch");
  const std::size_t L = params0.num_layers();
  LayerDiagnostics d;
  d.Q.resize(L);
  d.A.resize(L);
  std::vector<double> delta(L);
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const auto w0 = params0.weight(l);
    const auto w1 = params_final.weight(l);
    double dw = 0.0, w = 0.0;
    for (std::size_t j = 0; j < w0.size(); ++j) {
      dw += (w1[j] - w0[j]) * (w1[j] - w0[j]);
      w += w0[j] * w0[j];
    }
    delta[l] = std::sqrt(dw);
    d.Q[l] = delta[l] / (std::sqrt(w) + 1e-12) * 1e3;
    total += delta[l];
  }
  for (std::size_t l = 0; l < L; ++l) d.A[l] = total > 0.0 ? delta[l] / total : 0.0;
  return d;
}

// ---------------------------------------------------------------------------

std::vector<double> Trajectory::eps_series() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    if (!s.eps_pred) throw std::invalid_argument("trajectory is missing eps_pred at step " + std::to_string(s.t));
    out.push_back(*s.eps_pred);
  }
  return out;
}

std::optional<TrajectoryDiagnostics> trajectory_diagnostics(std::span<const double> eps, double eps_target) {
  if (!(eps_target > 0.0)) throw std::invalid_argument("trajectory_diagnostics: eps_target must be > 0");
  std::size_t t = 0;
  while (t < eps.size() && !(eps[t] <= eps_target)) ++t;
  if (t == eps.size()) return std::nullopt;
  TrajectoryDiagnostics d;
  d.t_eps = t;
  double peak = eps[t];
  for (std::size_t u = t; u < eps.size(); ++u) peak = std::max(peak, eps[u]);
  d.overshoot = std::max(0.0, peak - eps_target);
  for (std::size_t u = t; u + 1 < eps.size(); ++u) d.oscillation += std::fabs(eps[u + 1] - eps[u]);
  return d;
}

std::optional<TrajectoryDiagnostics> trajectory_diagnostics(const Trajectory& traj, double eps_target) {
  const auto series = traj.eps_series();
  return trajectory_diagnostics(series, eps_target);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("spearman: undefined for a constant input");
  return sxy / std::sqrt(sxx * syy);
}

} // namespace ulab
