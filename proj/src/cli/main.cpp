// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cczsl/cli/commands.hpp"
#include "cczsl/common/errors.hpp"
#include "cczsl/common/log.hpp"

namespace {

using cczsl::cli::ExperimentConfig;

// Options shared by the verbs that resolve an experiment config.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string splits;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file or run manifest");
    app->add_option("--set", overrides, "override a field, e.g. --set loss.lambda_opl=0.05")->take_all();
    app->add_option("--splits", splits, "table:<dataset>[@path] or generated");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : cczsl::cli::load_config(config_path);
    if (!splits.empty()) cczsl::cli::set_split_source(cfg, splits);
    cczsl::cli::apply_overrides(cfg, overrides);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual compositional zero-shot learning on a synthetic world"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "log every epoch");
  app.add_flag("-q,--quiet", quiet, "log nothing");

  ConfigOptions run_opts;
  bool no_cskd = false, no_cal = false, no_opl = false, no_idl = false, force = false;
  std::string fusion, out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "train all sessions and write artifacts");
  run_opts.attach(run);
  run->add_flag("--no-cskd", no_cskd, "disable cross-session distillation");
  run->add_flag("--no-cal", no_cal, "disable the cosine anchor loss");
  run->add_flag("--no-opl", no_opl, "disable the orthogonality loss");
  run->add_flag("--no-idl", no_idl, "disable the intra-session diversity loss");
  run->add_option("--sawm2f", fusion, "composition fusion: tail_only, update_both, freeze_head or off");
  auto* seed_opt = run->add_option("--seed", seed, "training seed");
  run->add_option("-o,--out", out_dir, "output directory");
  run->add_flag("--force", force, "replace artifacts of an earlier run in the output directory");

  std::string dir_a, dir_b;
  auto* compare = app.add_subcommand("compare", "metric deltas between two completed runs (a - b)");
  compare->add_option("run_a", dir_a, "run directory a")->required();
  compare->add_option("run_b", dir_b, "run directory b")->required();

  ConfigOptions split_opts;
  auto* validate = app.add_subcommand("validate-splits", "check session splits against the protocol constraints");
  split_opts.attach(validate);

  std::string dump_path;
  std::size_t dump_session = 0;
  bool with_curve = false;
  auto* dump = app.add_subcommand("eval-dump", "recompute metrics from a prediction dump");
  dump->add_option("dump", dump_path, "prediction dump file")->required();
  dump->add_option("--session", dump_session, "session index recorded in the report");
  dump->add_flag("--curve", with_curve, "include the bias-sweep curve");

  CLI11_PARSE(app, argc, argv);
  cczsl::log::set_level(quiet ? cczsl::log::Level::Quiet
                              : (verbose ? cczsl::log::Level::Info : cczsl::log::Level::Notice));

  try {
    if (*run) {
      ExperimentConfig cfg = run_opts.resolve();
      if (no_cskd) cfg.ablation.cskd = false;
      if (no_cal) cfg.ablation.cal = false;
      if (no_opl) cfg.ablation.opl = false;
      if (no_idl) cfg.ablation.idl = false;
      if (!fusion.empty()) cfg.ablation.comp_fusion = cczsl::model::comp_fusion_from_string(fusion);
      if (*seed_opt) cfg.train.seed = seed;
      if (!out_dir.empty()) cfg.output.dir = out_dir;
      auto result = cczsl::cli::run_experiment(cfg, force);
      std::cout << "F_AUC " << result.forgetting.f_auc << "\n";
      return 0;
    }
    if (*compare) {
      auto report = cczsl::cli::compare_runs(dir_a, dir_b);
      cczsl::cli::print_compare(std::cout, report, dir_a, dir_b);
      return 0;
    }
    if (*validate) {
      auto splits = cczsl::cli::load_splits(split_opts.resolve().split);
      return cczsl::cli::validate_and_print(splits, std::cout).empty() ? 0 : 1;
    }
    if (*dump) {
      std::cout << cczsl::cli::eval_dump(dump_path, dump_session, with_curve) << "\n";
      return 0;
    }
  } catch (const cczsl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
