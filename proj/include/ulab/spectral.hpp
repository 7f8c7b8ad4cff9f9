#pragma once

// Layer spectra and the heavy-tail stability gate.
//
// For a stored weight matrix W (m rows = out_dim, n cols = in_dim) the Gram
// matrix is C = W^T W / m. The top h = floor(tau * s) eigenvalues of C,
// s = min(m, n), are fitted to p(lambda) ~ lambda^-xi by continuous maximum
// likelihood with x_min equal to the smallest fitted eigenvalue:
//
//     xi = 1 + h / sum_{i=1..h} ln(lambda_i / lambda_h)
//
// and xi is mapped to a gate in (0, 1) peaking inside 2 < xi < 4:
//
//     nu = sigmoid(d1 (4 - xi)) * sigmoid(d2 (xi - 2))

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/matrix.hpp"
#include "ulab/nn.hpp"

namespace ulab {

/// (1/rows) W^T W for a row-major rows x cols matrix.
Matrix gram(std::span<const double> w, std::size_t rows, std::size_t cols);

/// Thrown when Jacobi sweeps stop short of the tolerance.
class EigenNonConvergence : public std::runtime_error {
public:
  EigenNonConvergence(int sweeps, double off_norm, std::vector<double> partial);

  int sweeps;
  double off_norm;
  std::vector<double> partial_eigenvalues; // current diagonal, descending
};

struct EigOptions {
  int max_sweeps = 100;
  // Off-diagonal Frobenius tolerance, scaled by max(1, ||C||_F).
  double tolerance = 1e-12;
};

/// Eigenvalues of (C + C^T)/2 in descending order, by cyclic Jacobi rotations.
std::vector<double> eig_sym(const Matrix& c, const EigOptions& options = {});

struct LayerSpectrum {
  std::size_t layer_id = 0; // 1-based
  std::vector<double> eigenvalues; // top s, descending, tiny negatives clamped to 0
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t s = 0;
};

LayerSpectrum layer_spectrum(std::span<const double> w, std::size_t rows, std::size_t cols, std::size_t layer_id);

struct PowerLawFit {
  double xi = 0.0; // NaN when !fit_ok
  bool fit_ok = false;
  double lambda_min_fit = 0.0;
  std::size_t h = 0;
  std::size_t s = 0;
};

/// Tail count floor(tau * s), guarded against representation error in tau.
std::size_t tail_count(double tau, std::size_t s);

PowerLawFit fit_power_law(std::span<const double> eigenvalues_desc, double tau);

double sigmoid(double z);

/// Full in-range gate.
double stability_gate(double xi, double d1, double d2);

/// Gate variants used by the ablations: full product, lower edge only
/// (sigmoid(d2 (xi - 2))), upper edge only (sigmoid(d1 (4 - xi))), or 1.
enum class GateVariant { full, lower_only, upper_only, unit };
double gate_value(GateVariant variant, double xi, double d1, double d2);

struct LayerProfile {
  std::size_t layer_id = 0;
  double xi = 0.0;
  double nu = 0.0;
  bool fit_ok = false;
  double lambda_min_fit = 0.0;
  std::size_t h = 0;
  std::size_t s = 0;
  std::size_t m = 0;
  std::size_t n = 0;
};

struct SpectralProfile {
  double tau = 0.1;
  double d1 = 2.0;
  double d2 = 2.0;
  double nu_floor = 0.5; // gate used when a layer's fit is degenerate
  std::vector<LayerProfile> layers;
};

SpectralProfile profile_model(const ModelParams& params0, double tau, double d1, double d2, double nu_floor = 0.5);

struct DepthGroup {
  std::string_view name;
  std::size_t count = 0;
  std::size_t fitted = 0;
  double mean_xi = 0.0; // over fitted layers; NaN when none
  double in_band_fraction = 0.0; // fraction with 2 < xi < 4; 0 for an empty group
};

/// Early / Middle / Late groups in forward order. Boundaries are
/// floor(early_frac * L) and floor((1 - late_frac) * L).
std::array<DepthGroup, 3> depth_group_summary(const SpectralProfile& profile, double early_frac = 0.25,
                                              double late_frac = 0.25);

} // namespace ulab
