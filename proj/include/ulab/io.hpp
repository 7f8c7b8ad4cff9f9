#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/audit.hpp"
#include "ulab/data.hpp"
#include "ulab/metrics.hpp"
#include "ulab/nn.hpp"
#include "ulab/spectral.hpp"

namespace ulab::io {

using nlohmann::json;

/// Format a double with 17 significant digits (round-trips exactly).
std::string format_real(double v);

// Checkpoints: {spec, layers: [{weight: row-major array, bias: array}]}.
std::string checkpoint_to_string(const ModelParams& params);
ModelParams checkpoint_from_string(const std::string& text);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const json& j);

// Splits: {strategy, ratio, seed, forget_ids, retain_ids}.
json split_to_json(const ForgetSplit& split);
ForgetSplit split_from_json(const json& j);
void save_split(const ForgetSplit& split, const std::string& path);
ForgetSplit load_split(const std::string& path);

// Profiles: {tau, d1, d2, layers: [{layer_id, xi, nu, fit_ok, h, s}]} and the same columns as CSV.
json profile_to_json(const SpectralProfile& profile);
std::string profile_to_csv(const SpectralProfile& profile);
json depth_groups_to_json(const std::array<DepthGroup, 3>& groups);

/// step, eps_pred, d_kl, acc_retain_test, drift, disp_l1..disp_lL; blank when absent.
std::string trajectory_to_csv(const Trajectory& traj, std::size_t num_layers);

json audit_to_json(const AuditReport& rep);
/// score,label per target query.
std::string audit_scores_to_csv(const AuditReport& rep);

/// Writes text to path, creating parent directories.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

} // namespace ulab::io
