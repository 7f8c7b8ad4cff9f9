#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ulab/error.hpp"
#include "ulab/harness.hpp"

using namespace ulab;

int main(int argc, char** argv) {
  CLI::App app{"Spectrally gated gradient unlearning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  CommandOptions opts;
  std::uint64_t seed = 0;
  std::string variant;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config (defaults are used when omitted)");
    sub->add_option("--out", opts.out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Run a single seed");
    sub->add_option("--variant", variant, "agu | sragu_full | sragu_lower_only | sragu_upper_only | sragu_nu_one");
    sub->add_flag("--no-early-stop", opts.no_early_stop, "Always take max_steps unlearning steps");
    sub->add_option("--checkpoint", opts.checkpoint, "Model to profile, audit or evaluate");
  };

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"gen-data", "Write the dataset partitions as CSV"},
      {"train", "Train the original model on the full training set"},
      {"split", "Choose the forget set"},
      {"retrain-gold", "Retrain from scratch on the retain set"},
      {"unlearn", "Run one unlearning variant"},
      {"evaluate", "Evaluate an unlearned checkpoint"},
      {"profile", "Per-layer spectral profile of a checkpoint"},
      {"audit", "Membership-inference audit of a checkpoint"},
      {"sweep", "Grid sweep over the config's sweep axes and seeds"},
      {"ablate", "All variants for every seed"},
      {"report", "Aggregate report.json files under the output directory"},
  };
  for (const auto& s : subs) add_common(app.add_subcommand(s.name, s.help));

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (sub->count("--seed")) opts.seed = seed;
    if (!variant.empty()) {
      try {
        opts.variant = parse_variant(variant);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("--variant: ") + e.what());
      }
    }

    if (cmd == "gen-data") std::cout << cmd_gen_data(cfg, opts) << "\n";
    else if (cmd == "train") std::cout << cmd_train(cfg, opts) << "\n";
    else if (cmd == "split") std::cout << cmd_split(cfg, opts) << "\n";
    else if (cmd == "retrain-gold") std::cout << cmd_retrain_gold(cfg, opts) << "\n";
    else if (cmd == "unlearn") std::cout << cmd_unlearn(cfg, opts) << "\n";
    else if (cmd == "evaluate") std::cout << cmd_evaluate(cfg, opts) << "\n";
    else if (cmd == "profile") std::cout << cmd_profile(cfg, opts) << "\n";
    else if (cmd == "audit") std::cout << cmd_audit(cfg, opts) << "\n";
    else if (cmd == "sweep") std::cout << cmd_sweep(cfg, opts).at("summary").dump(2) << "\n";
    else if (cmd == "ablate") std::cout << cmd_ablate(cfg, opts).at("variants").dump(2) << "\n";
    else if (cmd == "report") std::cout << cmd_report(cfg, opts).dump(2) << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
