#include "ulab/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ulab::io {

namespace fs = std::filesystem;

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

namespace {

std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_array(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if (!std::isfinite(values[i])) throw std::invalid_argument("checkpoint: non-finite parameter");
    out += format_real(values[i]);
  }
  out += ']';
}

} // namespace

json spec_to_json(const MlpSpec& spec) {
  return json{{"input_dim", spec.input_dim},
              {"hidden_dims", spec.hidden_dims},
              {"num_classes", spec.num_classes},
              {"activation", "relu"}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  if (j.contains("activation") && j.at("activation") != "relu")
    throw std::invalid_argument("unsupported activation " + j.at("activation").dump());
  s.validate();
  return s;
}

std::string checkpoint_to_string(const ModelParams& params) {
  std::string out = "{\"spec\":" + spec_to_json(params.spec).dump() + ",\"layers\":[";
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (l) out += ',';
    out += "{\"weight\":";
    append_array(out, params.weight(l));
    out += ",\"bias\":";
    append_array(out, params.bias(l));
    out += '}';
  }
  out += "]}\n";
  return out;
}

ModelParams checkpoint_from_string(const std::string& text) {
  const json j = json::parse(text);
  ModelParams p(spec_from_json(j.at("spec")));
  const auto& layers = j.at("layers");
  if (layers.size() != p.num_layers())
    throw std::invalid_argument("checkpoint: expected " + std::to_string(p.num_layers()) + " layers, found " +
                                std::to_string(layers.size()));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto w = layers[l].at("weight").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    auto pw = p.weight(l);
    auto pb = p.bias(l);
    if (w.size() != pw.size() || b.size() != pb.size())
      throw std::invalid_argument("checkpoint: layer " + std::to_string(l + 1) + " has the wrong shape");
    std::copy(w.begin(), w.end(), pw.begin());
    std::copy(b.begin(), b.end(), pb.begin());
  }
  return p;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  write_text(path, checkpoint_to_string(params));
}

ModelParams load_checkpoint(const std::string& path) { return checkpoint_from_string(read_text(path)); }

// ---------------------------------------------------------------------------

json split_to_json(const ForgetSplit& s) {
  json j{{"strategy", std::string(to_string(s.strategy))},
         {"ratio", s.ratio},
         {"seed", s.seed},
         {"forget_ids", s.forget_ids},
         {"retain_ids", s.retain_ids}};
  if (s.target_class) j["target_class"] = *s.target_class;
  return j;
}

ForgetSplit split_from_json(const json& j) {
  ForgetSplit s;
  s.strategy = parse_strategy(j.at("strategy").get<std::string>());
  s.ratio = j.at("ratio").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.forget_ids = j.at("forget_ids").get<std::vector<std::int64_t>>();
  s.retain_ids = j.at("retain_ids").get<std::vector<std::int64_t>>();
  if (j.contains("target_class")) s.target_class = j.at("target_class").get<int>();
  return s;
}

void save_split(const ForgetSplit& split, const std::string& path) { write_json(path, split_to_json(split)); }
ForgetSplit load_split(const std::string& path) { return split_from_json(read_json(path)); }

// ---------------------------------------------------------------------------

json profile_to_json(const SpectralProfile& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"layer_id", l.layer_id},
                      {"xi", l.fit_ok ? json(l.xi) : json(nullptr)},
                      {"nu", l.nu},
                      {"fit_ok", l.fit_ok},
                      {"h", l.h},
                      {"s", l.s}});
  }
  return json{{"tau", p.tau}, {"d1", p.d1}, {"d2", p.d2}, {"nu_floor", p.nu_floor}, {"layers", layers}};
}

std::string profile_to_csv(const SpectralProfile& p) {
  std::string out = "layer_id,xi,nu,fit_ok,h,s\n";
  for (const auto& l : p.layers) {
    out += std::to_string(l.layer_id) + ',' + (l.fit_ok ? format_short(l.xi) : std::string()) + ',' +
           format_short(l.nu) + ',' + (l.fit_ok ? "true" : "false") + ',' + std::to_string(l.h) + ',' +
           std::to_string(l.s) + '\n';
  }
  return out;
}

json depth_groups_to_json(const std::array<DepthGroup, 3>& groups) {
  json out = json::array();
  for (const auto& g : groups) {
    out.push_back({{"group", std::string(g.name)},
                   {"count", g.count},
                   {"fitted", g.fitted},
                   {"mean_xi", std::isfinite(g.mean_xi) ? json(g.mean_xi) : json(nullptr)},
                   {"in_band_fraction", g.in_band_fraction}});
  }
  return out;
}

std::string trajectory_to_csv(const Trajectory& traj, std::size_t num_layers) {
  std::string out = "step,eps_pred,d_kl,acc_retain_test,drift";
  for (std::size_t l = 0; l < num_layers; ++l) out += ",disp_l" + std::to_string(l + 1);
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_short(*v) : std::string(); };
  for (const auto& s : traj.steps) {
    out += std::to_string(s.t) + ',' + opt(s.eps_pred) + ',' + opt(s.d_kl) + ',' + opt(s.acc) + ',' +
           format_short(s.drift);
    for (double d : s.layer_displacement) out += ',' + format_short(d);
    out += '\n';
  }
  return out;
}

json audit_to_json(const AuditReport& r) {
  return json{{"auc", r.auc}, {"tpr_at_1pct_fpr", r.tpr_at_1pct_fpr}, {"n_pos", r.n_pos},
              {"n_neg", r.n_neg}, {"seed", r.seed}};
}

std::string audit_scores_to_csv(const AuditReport& r) {
  std::string out = "score,label\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i) out += format_short(r.scores[i]) + ',' + std::to_string(r.labels[i]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) { return json::parse(read_text(path)); }

} // namespace ulab::io
