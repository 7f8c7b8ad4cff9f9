#include "ulab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "ulab/error.hpp"
#include "ulab/io.hpp"
#include "ulab/kernels.hpp"
#include "ulab/metrics.hpp"
#include "ulab/rng.hpp"

namespace ulab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Strict config reading

namespace {

class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config key '" + name() + "' must be an object");
  }

  template <typename T> void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + qualified(key) + "': " + e.what());
    }
  }

  template <typename T> void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  /// Parses an enumeration through `parse`, reporting failures against the key.
  template <typename T, typename F> void get_enum(const char* key, T& out, F parse) {
    std::string s;
    get(key, s);
    if (!j_.contains(key)) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + qualified(key) + "': " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), qualified(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + qualified(it.key()) + "'");
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  std::string name() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  if (s == "adaptive_moment_decoupled" || s == "adamw") return OptimizerKind::adaptive_moment_decoupled;
  throw std::invalid_argument("unknown optimizer kind '" + s + "'");
}

std::string_view optimizer_kind_name(OptimizerKind k) {
  return k == OptimizerKind::sgd_momentum ? "sgd_momentum" : "adaptive_moment_decoupled";
}

void read_optimizer(Section s, OptimizerConfig& o) {
  s.get_enum("kind", o.kind, parse_optimizer_kind);
  s.get("learning_rate", o.learning_rate);
  s.get("momentum", o.momentum);
  s.get("weight_decay", o.weight_decay);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("epsilon", o.epsilon);
  s.finish();
}

json optimizer_json(const OptimizerConfig& o) {
  return json{{"kind", std::string(optimizer_kind_name(o.kind))},
              {"learning_rate", o.learning_rate},
              {"momentum", o.momentum},
              {"weight_decay", o.weight_decay},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"epsilon", o.epsilon}};
}

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  if (auto s = root.child("dataset")) {
    DatasetConfig& d = c.dataset;
    s->get("kind", d.kind);
    s->get("n_per_class", d.n_per_class);
    s->get("num_classes", d.num_classes);
    s->get("dim", d.dim);
    s->get("spread", d.spread);
    s->get("test_per_class", d.test_per_class);
    s->get("pool_per_class", d.pool_per_class);
    s->get("shadow_per_class", d.shadow_per_class);
    s->get("path", d.path);
    s->get("label_column", d.label_column);
    s->get("numeric_columns", d.numeric_columns);
    s->get("test_fraction", d.test_fraction);
    s->get("pool_fraction", d.pool_fraction);
    s->get("shadow_fraction", d.shadow_fraction);
    s->finish();
  }
  if (auto s = root.child("model")) {
    s->get("hidden_dims", c.hidden_dims);
    std::string act = "relu";
    s->get("activation", act);
    if (act != "relu") throw ConfigError("config key 'model.activation': only relu is supported");
    s->finish();
  }
  if (auto s = root.child("train")) {
    if (auto o = s->child("optimizer")) read_optimizer(*o, c.train.optimizer);
    s->get("epochs", c.train.epochs);
    s->get("batch_size", c.train.batch_size);
    s->finish();
  }
  if (auto s = root.child("unlearn")) {
    UnlearnConfig& u = c.unlearn;
    s->get_enum("variant", u.variant, [](const std::string& v) { return parse_variant(v); });
    s->get("alpha", u.alpha);
    s->get("kappa", u.kappa);
    s->get("max_steps", u.max_steps);
    s->get("epsilon_r", u.epsilon_r);
    s->get("batch_size", u.batch_size);
    if (auto o = s->child("optimizer")) read_optimizer(*o, u.optimizer);
    s->get("tau", u.tau);
    s->get("d1", u.d1);
    s->get("d2", u.d2);
    s->get("nu_floor", u.nu_floor);
    s->get_optional("oracle_eps_target", u.oracle_eps_target);
    s->get("disable_early_stop", u.disable_early_stop);
    s->get_enum("stop_check", u.stop_check, [](const std::string& v) { return parse_stop_check(v); });
    s->finish();
  }
  if (auto s = root.child("deletion")) {
    s->get_enum("strategy", c.deletion.strategy, [](const std::string& v) { return parse_strategy(v); });
    s->get("ratio", c.deletion.ratio);
    s->get_optional("target_class", c.deletion.target_class);
    s->finish();
  }
  if (auto s = root.child("eval")) {
    s->get("eps_target", c.eval.eps_target);
    s->get("query_limit", c.eval.query_limit);
    s->finish();
  }
  if (auto s = root.child("audit")) {
    s->get("enabled", c.audit.enabled);
    s->get("logreg_iterations", c.audit.logreg_iterations);
    s->get("logreg_learning_rate", c.audit.logreg_learning_rate);
    s->finish();
  }
  if (const json* sw = root.raw("sweep")) {
    if (!sw->is_object()) throw ConfigError("config key 'sweep' must be an object of axis -> array");
    for (auto it = sw->begin(); it != sw->end(); ++it) {
      if (!it.value().is_array() || it.value().empty())
        throw ConfigError("config key 'sweep." + it.key() + "' must be a nonempty array");
      c.sweep[it.key()] = it.value();
    }
  }
  root.get("seeds", c.seeds);
  root.get("output_dir", c.output_dir);
  root.finish();

  // Axis names are checked eagerly so typos fail before any work starts.
  for (const auto& [axis, values] : c.sweep) {
    ExperimentConfig probe = c;
    try {
      apply_axis(probe, axis, values.front());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key 'sweep." + axis + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config '" + path + "': " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json sweep_j = json::object();
  for (const auto& [k, v] : sweep) sweep_j[k] = v;
  const auto& d = dataset;
  const auto& u = unlearn;
  return json{
      {"dataset",
       {{"kind", d.kind},
        {"n_per_class", d.n_per_class},
        {"num_classes", d.num_classes},
        {"dim", d.dim},
        {"spread", d.spread},
        {"test_per_class", d.test_per_class},
        {"pool_per_class", d.pool_per_class},
        {"shadow_per_class", d.shadow_per_class},
        {"path", d.path},
        {"label_column", d.label_column},
        {"numeric_columns", d.numeric_columns},
        {"test_fraction", d.test_fraction},
        {"pool_fraction", d.pool_fraction},
        {"shadow_fraction", d.shadow_fraction}}},
      {"model", {{"hidden_dims", hidden_dims}, {"activation", "relu"}}},
      {"train",
       {{"optimizer", optimizer_json(train.optimizer)}, {"epochs", train.epochs}, {"batch_size", train.batch_size}}},
      {"unlearn",
       {{"variant", std::string(to_string(u.variant))},
        {"alpha", u.alpha},
        {"kappa", u.kappa},
        {"max_steps", u.max_steps},
        {"epsilon_r", u.epsilon_r},
        {"batch_size", u.batch_size},
        {"optimizer", optimizer_json(u.optimizer)},
        {"tau", u.tau},
        {"d1", u.d1},
        {"d2", u.d2},
        {"nu_floor", u.nu_floor},
        {"oracle_eps_target", u.oracle_eps_target ? json(*u.oracle_eps_target) : json(nullptr)},
        {"disable_early_stop", u.disable_early_stop},
        {"stop_check", std::string(to_string(u.stop_check))}}},
      {"deletion",
       {{"strategy", std::string(to_string(deletion.strategy))},
        {"ratio", deletion.ratio},
        {"target_class", deletion.target_class ? json(*deletion.target_class) : json(nullptr)}}},
      {"eval", {{"eps_target", eval.eps_target}, {"query_limit", eval.query_limit}}},
      {"audit",
       {{"enabled", audit.enabled},
        {"logreg_iterations", audit.logreg_iterations},
        {"logreg_learning_rate", audit.logreg_learning_rate}}},
      {"sweep", sweep_j},
      {"seeds", seeds},
      {"output_dir", output_dir}};
}

std::string ExperimentConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("config key '" + key + "': " + why); };
  if (dataset.kind != "blobs" && dataset.kind != "csv") fail("dataset.kind", "must be 'blobs' or 'csv'");
  if (dataset.kind == "blobs") {
    if (dataset.n_per_class < 1 || dataset.num_classes < 2 || dataset.dim < 1)
      fail("dataset", "blobs need n_per_class >= 1, num_classes >= 2, dim >= 1");
    if (!(dataset.spread > 0.0)) fail("dataset.spread", "must be > 0");
  } else {
    if (dataset.path.empty()) fail("dataset.path", "required for csv datasets");
    if (dataset.label_column.empty()) fail("dataset.label_column", "required for csv datasets");
    if (dataset.numeric_columns.empty()) fail("dataset.numeric_columns", "required for csv datasets");
    const double held = dataset.test_fraction + dataset.pool_fraction + dataset.shadow_fraction;
    if (dataset.test_fraction <= 0.0 || dataset.pool_fraction < 0.0 || dataset.shadow_fraction < 0.0 || held >= 1.0)
      fail("dataset", "held-out fractions must be nonnegative, test_fraction > 0, and sum below 1");
  }
  if (hidden_dims.empty() || std::find(hidden_dims.begin(), hidden_dims.end(), 0u) != hidden_dims.end())
    fail("model.hidden_dims", "need at least one positive hidden width");
  try {
    train.optimizer.validate();
  } catch (const std::exception& e) {
    fail("train.optimizer", e.what());
  }
  if (train.epochs < 1) fail("train.epochs", "must be >= 1");
  if (train.batch_size < 1) fail("train.batch_size", "must be >= 1");
  try {
    unlearn.validate();
  } catch (const std::exception& e) {
    fail("unlearn", e.what());
  }
  if (!(unlearn.tau > 0.0 && unlearn.tau <= 1.0)) fail("unlearn.tau", "must be in (0,1]");
  if (!(unlearn.d1 > 0.0 && unlearn.d2 > 0.0)) fail("unlearn.d1/d2", "must be > 0");
  if (!(unlearn.nu_floor > 0.0 && unlearn.nu_floor < 1.0)) fail("unlearn.nu_floor", "must be in (0,1)");
  if (deletion.strategy == DeletionStrategy::class_specific) {
    if (!deletion.target_class) fail("deletion.target_class", "required for class_specific deletion");
    if (!(deletion.ratio > 0.0 && deletion.ratio <= 1.0)) fail("deletion.ratio", "must be in (0,1]");
  } else if (!(deletion.ratio > 0.0 && deletion.ratio < 1.0)) {
    fail("deletion.ratio", "must be in (0,1)");
  }
  if (!(eval.eps_target > 0.0)) fail("eval.eps_target", "must be > 0");
  if (seeds.empty()) fail("seeds", "must be nonempty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds", "must be distinct");
}

void apply_axis(ExperimentConfig& cfg, const std::string& axis, const json& value) {
  try {
    if (axis == "tau") cfg.unlearn.tau = value.get<double>();
    else if (axis == "d") cfg.unlearn.d1 = cfg.unlearn.d2 = value.get<double>();
    else if (axis == "d1") cfg.unlearn.d1 = value.get<double>();
    else if (axis == "d2") cfg.unlearn.d2 = value.get<double>();
    else if (axis == "alpha") cfg.unlearn.alpha = value.get<double>();
    else if (axis == "kappa") cfg.unlearn.kappa = value.get<double>();
    else if (axis == "max_steps") cfg.unlearn.max_steps = value.get<std::size_t>();
    else if (axis == "ratio") cfg.deletion.ratio = value.get<double>();
    else if (axis == "variant") cfg.unlearn.variant = parse_variant(value.get<std::string>());
    else if (axis == "strategy") cfg.deletion.strategy = parse_strategy(value.get<std::string>());
    else throw ConfigError("unknown config key 'sweep." + axis + "'");
  } catch (const json::exception& e) {
    throw ConfigError("config key 'sweep." + axis + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key 'sweep." + axis + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

constexpr std::int64_t kTestIds = 1'000'000;
constexpr std::int64_t kPoolIds = 2'000'000;
constexpr std::int64_t kShadowTrainIds = 3'000'000;
constexpr std::int64_t kShadowTestIds = 4'000'000;

} // namespace

Corpus build_corpus(const DatasetConfig& d, std::uint64_t seed) {
  Corpus c;
  if (d.kind == "blobs") {
    auto gen = [&](std::size_t per_class, const char* role, std::int64_t first_id) {
      return gen_gaussian_blobs(per_class, d.num_classes, d.dim, d.spread, derive_seed(seed, role), first_id);
    };
    c.train = gen(d.n_per_class, "train", 0);
    c.test = gen(std::max<std::size_t>(1, d.test_per_class), "test", kTestIds);
    c.pool = gen(std::max<std::size_t>(1, d.pool_per_class), "pool", kPoolIds);
    c.shadow_train = gen(std::max<std::size_t>(1, d.shadow_per_class), "shadow_train", kShadowTrainIds);
    c.shadow_test = gen(std::max<std::size_t>(1, d.shadow_per_class), "shadow_test", kShadowTestIds);
    return c;
  }
  const Dataset all = load_csv(d.path, d.label_column, d.numeric_columns);
  Rng rng(derive_seed(seed, "csv_partition"));
  const auto perm = rng.permutation(all.size());
  const std::size_t n = all.size();
  const std::size_t n_test = std::max<std::size_t>(1, forget_count(d.test_fraction, n));
  const std::size_t n_pool = forget_count(d.pool_fraction, n);
  const std::size_t n_shadow = forget_count(d.shadow_fraction, n);
  if (n_test + n_pool + n_shadow >= n) throw ConfigError("dataset: too few rows for the requested held-out fractions");
  std::vector<std::int64_t> ids[5];
  std::size_t i = 0;
  for (; i < n_test; ++i) ids[1].push_back(all.ids[perm[i]]);
  for (std::size_t k = 0; k < n_pool; ++k, ++i) ids[2].push_back(all.ids[perm[i]]);
  for (std::size_t k = 0; k < n_shadow; ++k, ++i) ids[3 + (k % 2)].push_back(all.ids[perm[i]]);
  for (; i < n; ++i) ids[0].push_back(all.ids[perm[i]]);
  for (auto& v : ids) std::sort(v.begin(), v.end());
  c.train = all.subset(ids[0]);
  c.test = all.subset(ids[1]);
  c.pool = all.subset(ids[2]);
  c.shadow_train = all.subset(ids[3]);
  c.shadow_test = all.subset(ids[4]);
  return c;
}

MlpSpec model_spec(const ExperimentConfig& cfg, const Dataset& data) {
  MlpSpec s;
  s.input_dim = data.dim();
  s.hidden_dims = cfg.hidden_dims;
  s.num_classes = data.num_classes;
  s.validate();
  return s;
}

TrainResult train_original(const ExperimentConfig& cfg, const Dataset& train_set, std::uint64_t seed) {
  const auto ex = train_set.examples();
  TrainOptions opts{cfg.train.epochs, cfg.train.batch_size, derive_seed(seed, "train")};
  return train(model_spec(cfg, train_set), ex, cfg.train.optimizer, opts);
}

ForgetSplit make_split(const ExperimentConfig& cfg, const Dataset& train_set, const ModelParams& original,
                       std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, "split");
  switch (cfg.deletion.strategy) {
  case DeletionStrategy::random: return split_random(train_set, cfg.deletion.ratio, s);
  case DeletionStrategy::class_specific: return split_class(train_set, *cfg.deletion.target_class, cfg.deletion.ratio, s);
  default: return rank_and_split(train_set, original, cfg.deletion.strategy, cfg.deletion.ratio, s);
  }
}

TrainResult train_gold(const ExperimentConfig& cfg, const Dataset& train_set, const ForgetSplit& split,
                       std::uint64_t seed, AccessLog* log) {
  const Dataset retain = train_set.subset(split.retain_ids);
  const auto ex = retain.examples();
  TrainOptions opts{cfg.train.epochs, cfg.train.batch_size, derive_seed(seed, "gold"), log};
  return train(model_spec(cfg, train_set), ex, cfg.train.optimizer, opts);
}

std::vector<Example> retained_test_examples(const ExperimentConfig&, const Dataset& test, const ForgetSplit& split) {
  std::vector<Example> out;
  for (const auto& e : test.examples())
    if (!(split.strategy == DeletionStrategy::class_specific && split.target_class && e.label == *split.target_class))
      out.push_back(e);
  return out;
}

namespace {

std::vector<Example> query_set(const ExperimentConfig& cfg, const std::vector<Example>& forget, std::uint64_t seed) {
  if (cfg.eval.query_limit == 0 || cfg.eval.query_limit >= forget.size()) return forget;
  Rng rng(derive_seed(seed, "queries"));
  auto perm = rng.permutation(forget.size());
  perm.resize(cfg.eval.query_limit);
  std::sort(perm.begin(), perm.end());
  std::vector<Example> out;
  for (auto i : perm) out.push_back(forget[i]);
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

} // namespace

json evaluate_run(const ExperimentConfig& cfg, const Corpus& corpus, const ForgetSplit& split,
                  const ModelParams& original, const ModelParams& unlearned, const ModelParams* gold,
                  const SpectralProfile& profile, const UnlearnResult* result) {
  const auto forget = corpus.train.examples(split.forget_ids);
  const auto queries = query_set(cfg, forget, split.seed);
  const auto acc_set = retained_test_examples(cfg, corpus.test, split);
  json r;
  r["acc_retain"] = acc_set.empty() ? json(nullptr) : json(accuracy(unlearned, acc_set));
  r["acc_forget"] = accuracy(unlearned, forget);
  r["eps_pred"] = gold ? json(eps_pred(unlearned, *gold, queries)) : json(nullptr);
  r["d_kl"] = gold ? json(kl_to_gold(*gold, unlearned, queries)) : json(nullptr);
  r["drift"] = drift(unlearned, original);
  const auto diag = layer_diagnostics(original, unlearned);
  const std::vector<double> gates =
      result ? result->weights.layer_nu : std::vector<double>(profile.layers.size(), 1.0);
  json layers = json::array();
  for (std::size_t l = 0; l < original.num_layers(); ++l) {
    const auto& lp = profile.layers.at(l);
    layers.push_back({{"layer_id", l + 1},
                      {"xi", lp.fit_ok ? json(lp.xi) : json(nullptr)},
                      {"nu", lp.nu},
                      {"gate_applied", gates.at(l)},
                      {"fit_ok", lp.fit_ok},
                      {"Q", diag.Q[l]},
                      {"A", diag.A[l]}});
  }
  r["layers"] = layers;
  json diagnostics = json::object();
  if (result) {
    r["variant"] = std::string(to_string(cfg.unlearn.variant));
    r["steps_taken"] = result->steps_taken;
    r["stop_reason"] = std::string(to_string(result->stop_reason));
    bool has_eps = !result->trajectory.steps.empty();
    for (const auto& s : result->trajectory.steps) has_eps = has_eps && s.eps_pred.has_value();
    if (has_eps) {
      const auto d = trajectory_diagnostics(result->trajectory, cfg.eval.eps_target);
      diagnostics["eps_target"] = cfg.eval.eps_target;
      diagnostics["reached"] = d.has_value();
      if (d) {
        diagnostics["t_eps"] = d->t_eps;
        diagnostics["OS"] = d->overshoot;
        diagnostics["OI"] = d->oscillation;
      }
    }
  }
  r["diagnostics"] = diagnostics;
  r["trajectory_csv_path"] = nullptr;
  return r;
}

AuditReport audit_model(const ExperimentConfig& cfg, const Corpus& corpus, const ForgetSplit& split,
                        const ModelParams& target, std::uint64_t seed) {
  const auto forget = corpus.train.examples(split.forget_ids);
  const auto pool = corpus.pool.examples();
  const auto sh_train = corpus.shadow_train.examples();
  const auto sh_test = corpus.shadow_test.examples();
  ShadowSetup setup;
  setup.recipe = {target.spec, cfg.train.optimizer, cfg.train.epochs, cfg.train.batch_size};
  setup.shadow_train = sh_train;
  setup.shadow_test = sh_test;
  setup.logreg = {cfg.audit.logreg_iterations, cfg.audit.logreg_learning_rate};
  return run_audit(target, forget, pool, setup, derive_seed(seed, "audit"));
}

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<Variant>& variants,
                     const std::string& out_dir) {
  SeedOutcome out;
  out.seed = seed;
  const Corpus corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  const TrainResult original = train_original(cfg, corpus.train, seed);
  out.original = original.params;
  out.split = make_split(cfg, corpus.train, out.original, seed);

  AccessLog gold_log;
  const TrainResult gold = train_gold(cfg, corpus.train, out.split, seed, &gold_log);
  out.gold = gold.params;
  for (auto id : out.split.forget_ids)
    if (gold_log.ids.count(id)) throw std::logic_error("gold retraining read forget id " + std::to_string(id));

  const auto& u = cfg.unlearn;
  out.profile = profile_model(out.original, u.tau, u.d1, u.d2, u.nu_floor);
  const auto forget = corpus.train.examples(out.split.forget_ids);
  const auto queries = query_set(cfg, forget, out.split.seed);
  const auto acc_set = retained_test_examples(cfg, corpus.test, out.split);

  const bool write = !out_dir.empty();
  auto path = [&](const std::string& rel) { return (fs::path(out_dir) / rel).string(); };
  if (write) {
    io::save_checkpoint(out.original, path("model.json"));
    io::save_split(out.split, path("split.json"));
    io::save_checkpoint(out.gold, path("gold.json"));
    io::write_json(path("profile.json"), io::profile_to_json(out.profile));
    io::write_text(path("profile.csv"), io::profile_to_csv(out.profile));
  }

  std::optional<AuditReport> gold_audit;
  for (Variant v : variants) {
    ExperimentConfig vcfg = cfg;
    vcfg.unlearn.variant = v;
    UnlearnConfig ucfg = vcfg.unlearn;
    ucfg.seed = derive_seed(seed, "unlearn");
    VariantRun run;
    run.variant = v;
    run.result = run_unlearning(out.original, forget, ucfg, out.profile, {&out.gold, queries, acc_set});
    run.report = evaluate_run(vcfg, corpus, out.split, out.original, run.result.final_params, &out.gold, out.profile,
                              &run.result);
    run.report["seed"] = seed;
    run.report["config_hash"] = cfg.hash();
    if (cfg.audit.enabled) {
      const auto rep = audit_model(cfg, corpus, out.split, run.result.final_params, seed);
      run.report["mia"] = io::audit_to_json(rep);
      if (!gold_audit) gold_audit = audit_model(cfg, corpus, out.split, out.gold, seed);
      run.report["mia_gold"] = io::audit_to_json(*gold_audit);
    }
    if (write) {
      const std::string vdir = std::string(to_string(v));
      io::save_checkpoint(run.result.final_params, path(vdir + "/unlearned.json"));
      io::write_text(path(vdir + "/trajectory.csv"),
                     io::trajectory_to_csv(run.result.trajectory, out.original.num_layers()));
      run.report["trajectory_csv_path"] = path(vdir + "/trajectory.csv");
      io::write_json(path(vdir + "/report.json"), run.report);
    }
    out.runs.push_back(std::move(run));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
  a.min = *std::min_element(values.begin(), values.end());
  a.max = *std::max_element(values.begin(), values.end());
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

json aggregate_to_json(const Aggregate& a) {
  return json{{"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"max", a.max}, {"n", a.n}};
}

namespace {

json aggregate_reports(const std::vector<json>& reports) {
  json out = json::object();
  for (const auto& m : kReportMetrics) {
    std::vector<double> v;
    for (const auto& r : reports)
      if (r.contains(m) && r.at(m).is_number()) v.push_back(r.at(m).get<double>());
    if (!v.empty()) out[m] = aggregate_to_json(aggregate(v));
  }
  std::vector<double> mia;
  for (const auto& r : reports)
    if (r.contains("mia")) mia.push_back(r.at("mia").at("auc").get<double>());
  if (!mia.empty()) out["mia_auc"] = aggregate_to_json(aggregate(mia));
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Commands

ExperimentConfig resolve(const ExperimentConfig& cfg, const CommandOptions& opts) {
  ExperimentConfig c = cfg;
  if (!opts.out_dir.empty()) c.output_dir = opts.out_dir;
  if (opts.seed) c.seeds = {*opts.seed};
  if (opts.variant) c.unlearn.variant = *opts.variant;
  if (opts.no_early_stop) c.unlearn.disable_early_stop = true;
  c.validate();
  return c;
}

namespace {

std::string at(const ExperimentConfig& c, const std::string& rel) { return (fs::path(c.output_dir) / rel).string(); }

void require_file(const std::string& p, const char* producer) {
  if (!fs::exists(p)) throw std::runtime_error("missing '" + p + "'; run '" + producer + "' first");
}

} // namespace

std::string cmd_gen_data(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto corpus = build_corpus(cfg.dataset, derive_seed(cfg.seeds.front(), "data"));
  fs::create_directories(at(cfg, "data"));
  save_csv(corpus.train, at(cfg, "data/train.csv"));
  save_csv(corpus.test, at(cfg, "data/test.csv"));
  save_csv(corpus.pool, at(cfg, "data/pool.csv"));
  save_csv(corpus.shadow_train, at(cfg, "data/shadow_train.csv"));
  save_csv(corpus.shadow_test, at(cfg, "data/shadow_test.csv"));
  return at(cfg, "data");
}

std::string cmd_train(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  const auto res = train_original(cfg, corpus.train, seed);
  std::string log = "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
    log += std::to_string(e + 1) + ',' + io::format_real(res.epoch_loss[e]) + '\n';
  io::write_text(at(cfg, "train_log.csv"), log);
  io::save_checkpoint(res.params, at(cfg, "model.json"));
  return at(cfg, "model.json");
}

std::string cmd_split(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  ModelParams original;
  if (is_ranking_strategy(cfg.deletion.strategy)) {
    require_file(at(cfg, "model.json"), "train");
    original = io::load_checkpoint(at(cfg, "model.json"));
  }
  io::save_split(make_split(cfg, corpus.train, original, seed), at(cfg, "split.json"));
  return at(cfg, "split.json");
}

std::string cmd_retrain_gold(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  require_file(at(cfg, "split.json"), "split");
  const auto split = io::load_split(at(cfg, "split.json"));
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  AccessLog log;
  const auto res = train_gold(cfg, corpus.train, split, seed, &log);
  for (auto id : split.forget_ids)
    if (log.ids.count(id)) throw std::logic_error("gold retraining read forget id " + std::to_string(id));
  io::save_checkpoint(res.params, at(cfg, "gold.json"));
  return at(cfg, "gold.json");
}

std::string cmd_unlearn(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  require_file(at(cfg, "model.json"), "train");
  require_file(at(cfg, "split.json"), "split");
  const auto original = io::load_checkpoint(at(cfg, "model.json"));
  const auto split = io::load_split(at(cfg, "split.json"));
  std::optional<ModelParams> gold;
  if (fs::exists(at(cfg, "gold.json"))) gold = io::load_checkpoint(at(cfg, "gold.json"));
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  const auto& u = cfg.unlearn;
  const auto profile = profile_model(original, u.tau, u.d1, u.d2, u.nu_floor);
  const auto forget = corpus.train.examples(split.forget_ids);
  const auto queries = query_set(cfg, forget, split.seed);
  const auto acc_set = retained_test_examples(cfg, corpus.test, split);
  UnlearnConfig ucfg = u;
  ucfg.seed = derive_seed(seed, "unlearn");
  UnlearnEval ev;
  if (gold) ev = {&*gold, queries, acc_set};
  else ev.accuracy_set = acc_set;
  const auto res = run_unlearning(original, forget, ucfg, profile, ev);
  const std::string vdir = std::string(to_string(u.variant));
  io::save_checkpoint(res.final_params, at(cfg, vdir + "/unlearned.json"));
  io::write_text(at(cfg, vdir + "/trajectory.csv"), io::trajectory_to_csv(res.trajectory, original.num_layers()));
  auto report = evaluate_run(cfg, corpus, split, original, res.final_params, gold ? &*gold : nullptr, profile, &res);
  report["seed"] = seed;
  report["config_hash"] = cfg.hash();
  report["trajectory_csv_path"] = at(cfg, vdir + "/trajectory.csv");
  io::write_json(at(cfg, vdir + "/report.json"), report);
  return at(cfg, vdir + "/report.json");
}

std::string cmd_evaluate(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  require_file(at(cfg, "model.json"), "train");
  require_file(at(cfg, "split.json"), "split");
  const std::string vdir = std::string(to_string(cfg.unlearn.variant));
  const std::string target = opts.checkpoint.empty() ? at(cfg, vdir + "/unlearned.json") : opts.checkpoint;
  require_file(target, "unlearn");
  const auto original = io::load_checkpoint(at(cfg, "model.json"));
  const auto unlearned = io::load_checkpoint(target);
  const auto split = io::load_split(at(cfg, "split.json"));
  std::optional<ModelParams> gold;
  if (fs::exists(at(cfg, "gold.json"))) gold = io::load_checkpoint(at(cfg, "gold.json"));
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  const auto& u = cfg.unlearn;
  const auto profile = profile_model(original, u.tau, u.d1, u.d2, u.nu_floor);
  auto report = evaluate_run(cfg, corpus, split, original, unlearned, gold ? &*gold : nullptr, profile, nullptr);
  report["seed"] = seed;
  report["checkpoint"] = target;
  if (fs::exists(at(cfg, vdir + "/trajectory.csv")) && opts.checkpoint.empty())
    report["trajectory_csv_path"] = at(cfg, vdir + "/trajectory.csv");
  if (cfg.audit.enabled) report["mia"] = io::audit_to_json(audit_model(cfg, corpus, split, unlearned, seed));
  const std::string out = at(cfg, "evaluation.json");
  io::write_json(out, report);
  return out;
}

std::string cmd_profile(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const std::string target = opts.checkpoint.empty() ? at(cfg, "model.json") : opts.checkpoint;
  require_file(target, "train");
  const auto params = io::load_checkpoint(target);
  const auto& u = cfg.unlearn;
  const auto profile = profile_model(params, u.tau, u.d1, u.d2, u.nu_floor);
  io::write_json(at(cfg, "profile.json"), io::profile_to_json(profile));
  io::write_text(at(cfg, "profile.csv"), io::profile_to_csv(profile));
  io::write_json(at(cfg, "depth_groups.json"), io::depth_groups_to_json(depth_group_summary(profile)));
  return at(cfg, "profile.json");
}

std::string cmd_audit(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto seed = cfg.seeds.front();
  require_file(at(cfg, "split.json"), "split");
  const std::string target =
      opts.checkpoint.empty() ? at(cfg, std::string(to_string(cfg.unlearn.variant)) + "/unlearned.json")
                              : opts.checkpoint;
  require_file(target, "unlearn");
  const auto params = io::load_checkpoint(target);
  const auto split = io::load_split(at(cfg, "split.json"));
  const auto corpus = build_corpus(cfg.dataset, derive_seed(seed, "data"));
  const auto rep = audit_model(cfg, corpus, split, params, seed);
  auto j = io::audit_to_json(rep);
  j["checkpoint"] = target;
  io::write_json(at(cfg, "mia.json"), j);
  io::write_text(at(cfg, "mia_scores.csv"), io::audit_scores_to_csv(rep));
  return at(cfg, "mia.json");
}

namespace {

struct Cell {
  std::string name;
  ExperimentConfig cfg;
  json point = json::object();
};

std::vector<Cell> grid_cells(const ExperimentConfig& base) {
  std::vector<Cell> cells{{"base", base, json::object()}};
  if (base.sweep.empty()) return cells;
  cells = {{"", base, json::object()}};
  for (const auto& [axis, values] : base.sweep) {
    std::vector<Cell> next;
    for (const auto& c : cells)
      for (const auto& v : values) {
        Cell n = c;
        apply_axis(n.cfg, axis, v);
        n.point[axis] = v;
        const std::string token = axis + "=" + (v.is_string() ? v.get<std::string>() : fmt_num(v.get<double>()));
        n.name += (n.name.empty() ? "" : "_") + token;
        next.push_back(std::move(n));
      }
    cells = std::move(next);
  }
  for (auto& c : cells) c.cfg.validate();
  return cells;
}

struct RunRecord {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  std::string dir;
  std::string error;
  json report;
};

void execute(std::vector<RunRecord>& runs, const std::vector<Cell>& cells, const std::vector<Variant>* variants) {
  const long n = static_cast<long>(runs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    auto& r = runs[static_cast<std::size_t>(i)];
    try {
      const auto& cfg = cells[r.cell].cfg;
      const std::vector<Variant> vs = variants ? *variants : std::vector<Variant>{cfg.unlearn.variant};
      const auto outcome = run_seed(cfg, r.seed, vs, r.dir);
      json reports = json::array();
      for (const auto& v : outcome.runs) reports.push_back(v.report);
      r.report = std::move(reports);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }
}

json artifact_paths(const std::string& dir, Variant v) {
  const std::string vd = (fs::path(dir) / std::string(to_string(v))).string();
  return json{{"checkpoint", (fs::path(dir) / "model.json").string()},
              {"split", (fs::path(dir) / "split.json").string()},
              {"gold", (fs::path(dir) / "gold.json").string()},
              {"profile", (fs::path(dir) / "profile.json").string()},
              {"unlearned", vd + "/unlearned.json"},
              {"trajectory", vd + "/trajectory.csv"},
              {"report", vd + "/report.json"}};
}

} // namespace

json cmd_sweep(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const auto cells = grid_cells(cfg);
  std::vector<RunRecord> runs;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (auto s : cfg.seeds)
      runs.push_back({c, s, (fs::path(cfg.output_dir) / cells[c].name / ("seed_" + std::to_string(s))).string(), {}, {}});
  execute(runs, cells, nullptr);

  json manifest;
  manifest["config_hash"] = cfg.hash();
  manifest["config"] = cfg.to_json();
  json run_list = json::array();
  std::vector<std::vector<json>> per_cell(cells.size());
  std::size_t ok = 0, eps_stops = 0, failed = 0;
  for (const auto& r : runs) {
    json e{{"cell", cells[r.cell].name}, {"seed", r.seed}};
    if (!r.error.empty()) {
      e["status"] = "failed";
      e["error"] = r.error;
      ++failed;
    } else {
      const json& rep = r.report.at(0);
      e["status"] = "ok";
      e["artifacts"] = artifact_paths(r.dir, cells[r.cell].cfg.unlearn.variant);
      e["stop_reason"] = rep.at("stop_reason");
      per_cell[r.cell].push_back(rep);
      ++ok;
      if (rep.at("stop_reason") == "oracle_eps_target") ++eps_stops;
    }
    run_list.push_back(e);
  }
  manifest["runs"] = run_list;

  json cell_list = json::array();
  std::map<std::string, std::vector<double>> cell_means;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    json agg = aggregate_reports(per_cell[c]);
    for (auto it = agg.begin(); it != agg.end(); ++it) cell_means[it.key()].push_back(it.value().at("mean").get<double>());
    cell_list.push_back({{"cell", cells[c].name}, {"point", cells[c].point}, {"aggregate", agg},
                         {"n_ok", per_cell[c].size()}});
  }
  manifest["cells"] = cell_list;

  json summary;
  for (const auto& [metric, means] : cell_means) {
    const auto a = aggregate(means);
    summary[metric] = {{"range", {a.min, a.max}}, {"std_over_grid", a.std}, {"mean_over_grid", a.mean}};
  }
  summary["runs_total"] = runs.size();
  summary["runs_ok"] = ok;
  summary["runs_failed"] = failed;
  summary["stop_at_eps_pred"] = ok ? static_cast<double>(eps_stops) / static_cast<double>(ok) : 0.0;
  summary["stop_at_eps_pred_count"] = eps_stops;
  manifest["summary"] = summary;

  std::string csv = "cell";
  for (const auto& m : kReportMetrics) csv += "," + m + "_mean," + m + "_std";
  csv += "\n";
  for (const auto& c : cell_list) {
    csv += c.at("cell").get<std::string>();
    for (const auto& m : kReportMetrics) {
      const auto& agg = c.at("aggregate");
      if (agg.contains(m))
        csv += "," + io::format_real(agg[m]["mean"].get<double>()) + "," + io::format_real(agg[m]["std"].get<double>());
      else
        csv += ",,";
    }
    csv += "\n";
  }
  io::write_text(at(cfg, "summary.csv"), csv);
  io::write_json(at(cfg, "manifest.json"), manifest);
  return manifest;
}

json cmd_ablate(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  const std::vector<Variant> variants(std::begin(kAllVariants), std::end(kAllVariants));
  const std::vector<Cell> cells{{"ablation", cfg, json::object()}};
  std::vector<RunRecord> runs;
  for (auto s : cfg.seeds) runs.push_back({0, s, (fs::path(cfg.output_dir) / ("seed_" + std::to_string(s))).string(), {}, {}});
  execute(runs, cells, &variants);

  json manifest;
  manifest["config_hash"] = cfg.hash();
  manifest["config"] = cfg.to_json();
  json run_list = json::array();
  std::map<std::string, std::vector<json>> by_variant;
  std::string csv = "variant,seed,acc_retain,eps_pred,d_kl,drift,steps_taken,stop_reason\n";
  auto num = [](const json& v) { return v.is_number() ? io::format_real(v.get<double>()) : std::string(); };
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      run_list.push_back({{"seed", r.seed}, {"status", "failed"}, {"error", r.error}});
      continue;
    }
    for (const auto& rep : r.report) {
      const std::string v = rep.at("variant").get<std::string>();
      by_variant[v].push_back(rep);
      run_list.push_back({{"seed", r.seed}, {"variant", v}, {"status", "ok"},
                          {"artifacts", artifact_paths(r.dir, parse_variant(v))}});
      csv += v + "," + std::to_string(r.seed) + "," + num(rep["acc_retain"]) + "," + num(rep["eps_pred"]) + "," +
             num(rep["d_kl"]) + "," + num(rep["drift"]) + "," + std::to_string(rep["steps_taken"].get<std::size_t>()) +
             "," + rep["stop_reason"].get<std::string>() + "\n";
    }
  }
  manifest["runs"] = run_list;
  json variants_j = json::object();
  for (const auto& [v, reps] : by_variant) variants_j[v] = aggregate_reports(reps);
  manifest["variants"] = variants_j;
  io::write_text(at(cfg, "ablation.csv"), csv);
  io::write_json(at(cfg, "manifest.json"), manifest);
  return manifest;
}

json cmd_report(const ExperimentConfig& cfg0, const CommandOptions& opts) {
  const auto cfg = resolve(cfg0, opts);
  if (!fs::exists(cfg.output_dir)) throw std::runtime_error("output directory '" + cfg.output_dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(cfg.output_dir))
    if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<json>> by_variant;
  for (const auto& f : files) {
    const auto rep = io::read_json(f.string());
    by_variant[rep.value("variant", std::string("unknown"))].push_back(rep);
  }
  json out;
  out["reports"] = files.size();
  json variants = json::object();
  for (const auto& [v, reps] : by_variant) variants[v] = aggregate_reports(reps);
  out["variants"] = variants;
  io::write_json(at(cfg, "report_summary.json"), out);
  return out;
}

} // namespace ulab
