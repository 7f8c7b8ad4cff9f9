#include "ulab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ulab/kernels.hpp"

namespace ulab {

Matrix gram(std::span<const double> w, std::size_t rows, std::size_t cols) { return kernels::gram(w, rows, cols); }

EigenNonConvergence::EigenNonConvergence(int s, double off, std::vector<double> partial)
    : std::runtime_error("eig_sym: Jacobi did not converge after " + std::to_string(s) +
                         " sweeps (off-diagonal norm " + std::to_string(off) + ")"),
      sweeps(s), off_norm(off), partial_eigenvalues(std::move(partial)) {}

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

std::vector<double> sorted_diagonal(const Matrix& a) {
  std::vector<double> d(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) d[i] = a(i, i);
  std::sort(d.begin(), d.end(), std::greater<>());
  return d;
}

} // namespace

std::vector<double> eig_sym(const Matrix& c, const EigOptions& options) {
  if (c.rows != c.cols) throw std::invalid_argument("eig_sym: matrix must be square");
  const std::size_t n = c.rows;
  Matrix a(n, n);
  double frob = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = 0.5 * (c(i, j) + c(j, i));
      frob += a(i, j) * a(i, j);
    }
  const double tol = options.tolerance * std::max(1.0, std::sqrt(frob));

  double off = off_diagonal_norm(a);
  int sweep = 0;
  while (off >= tol) {
    if (sweep == options.max_sweeps) throw EigenNonConvergence(sweep, off, sorted_diagonal(a));
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        double t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = a(p, k) = cs * akp - sn * akq;
          a(k, q) = a(q, k) = sn * akp + cs * akq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
      }
    }
    off = off_diagonal_norm(a);
  }
  return sorted_diagonal(a);
}

LayerSpectrum layer_spectrum(std::span<const double> w, std::size_t rows, std::size_t cols, std::size_t layer_id) {
  LayerSpectrum ls;
  ls.layer_id = layer_id;
  ls.m = rows;
  ls.n = cols;
  ls.s = std::min(rows, cols);
  auto eig = eig_sym(gram(w, rows, cols));
  eig.resize(ls.s);
  for (double& v : eig)
    if (v < 0.0 && v >= -1e-10) v = 0.0;
  ls.eigenvalues = std::move(eig);
  return ls;
}

std::size_t tail_count(double tau, std::size_t s) {
  return static_cast<std::size_t>(std::floor(tau * static_cast<double>(s) + 1e-9));
}

PowerLawFit fit_power_law(std::span<const double> eig, double tau) {
  PowerLawFit fit;
  fit.s = eig.size();
  fit.h = std::min(tail_count(tau, fit.s), fit.s);
  fit.xi = std::numeric_limits<double>::quiet_NaN();
  if (fit.h == 0) return fit;
  const double lmin = eig[fit.h - 1];
  fit.lambda_min_fit = lmin;
  if (fit.h < 3 || !(lmin > 0.0)) return fit;
  if (eig[0] - lmin <= 1e-12 * std::fabs(eig[0])) return fit; // flat tail
  double log_sum = 0.0;
  for (std::size_t i = 0; i < fit.h; ++i) log_sum += std::log(eig[i] / lmin);
  if (!(log_sum > 0.0) || !std::isfinite(log_sum)) return fit;
  fit.xi = 1.0 + static_cast<double>(fit.h) / log_sum;
  fit.fit_ok = true;
  return fit;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double stability_gate(double xi, double d1, double d2) { return sigmoid(d1 * (4.0 - xi)) * sigmoid(d2 * (xi - 2.0)); }

double gate_value(GateVariant variant, double xi, double d1, double d2) {
  switch (variant) {
  case GateVariant::full: return stability_gate(xi, d1, d2);
  case GateVariant::lower_only: return sigmoid(d2 * (xi - 2.0));
  case GateVariant::upper_only: return sigmoid(d1 * (4.0 - xi));
  case GateVariant::unit: return 1.0;
  }
  return 1.0;
}

SpectralProfile profile_model(const ModelParams& params0, double tau, double d1, double d2, double nu_floor) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("profile_model: tau must be in (0,1]");
  if (!(d1 > 0.0 && d2 > 0.0)) throw std::invalid_argument("profile_model: d1 and d2 must be > 0");
  if (!(nu_floor > 0.0 && nu_floor < 1.0)) throw std::invalid_argument("profile_model: nu_floor must be in (0,1)");
  SpectralProfile prof;
  prof.tau = tau;
  prof.d1 = d1;
  prof.d2 = d2;
  prof.nu_floor = nu_floor;
  prof.layers.resize(params0.num_layers());
  const long L = static_cast<long>(params0.num_layers());
#pragma omp parallel for schedule(dynamic)
  for (long sl = 0; sl < L; ++sl) {
    const std::size_t l = static_cast<std::size_t>(sl);
    const LayerSlice& s = params0.layout[l];
    const auto spec = layer_spectrum(params0.weight(l), s.rows, s.cols, l + 1);
    const auto fit = fit_power_law(spec.eigenvalues, tau);
    LayerProfile& lp = prof.layers[l];
    lp.layer_id = l + 1;
    lp.xi = fit.xi;
    lp.fit_ok = fit.fit_ok;
    lp.lambda_min_fit = fit.lambda_min_fit;
    lp.h = fit.h;
    lp.s = fit.s;
    lp.m = s.rows;
    lp.n = s.cols;
    lp.nu = fit.fit_ok ? stability_gate(fit.xi, d1, d2) : nu_floor;
  }
  return prof;
}

std::array<DepthGroup, 3> depth_group_summary(const SpectralProfile& profile, double early_frac, double late_frac) {
  const std::size_t L = profile.layers.size();
  if (L == 0) throw std::invalid_argument("depth_group_summary: empty profile");
  const auto early_end = static_cast<std::size_t>(std::floor(early_frac * static_cast<double>(L) + 1e-9));
  const auto middle_end = std::max(
      early_end, static_cast<std::size_t>(std::floor((1.0 - late_frac) * static_cast<double>(L) + 1e-9)));
  std::array<DepthGroup, 3> groups{DepthGroup{"early"}, DepthGroup{"middle"}, DepthGroup{"late"}};
  std::array<double, 3> xi_sum{0.0, 0.0, 0.0};
  std::array<std::size_t, 3> in_band{0, 0, 0};
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t g = l < early_end ? 0 : (l < middle_end ? 1 : 2);
    const auto& lp = profile.layers[l];
    ++groups[g].count;
    if (lp.fit_ok) {
      ++groups[g].fitted;
      xi_sum[g] += lp.xi;
      if (lp.xi > 2.0 && lp.xi < 4.0) ++in_band[g];
    }
  }
  for (std::size_t g = 0; g < 3; ++g) {
    groups[g].mean_xi = groups[g].fitted ? xi_sum[g] / static_cast<double>(groups[g].fitted)
                                         : std::numeric_limits<double>::quiet_NaN();
    groups[g].in_band_fraction =
        groups[g].count ? static_cast<double>(in_band[g]) / static_cast<double>(groups[g].count) : 0.0;
  }
  return groups;
}

} // namespace ulab
