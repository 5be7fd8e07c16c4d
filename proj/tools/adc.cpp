#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ADC cross-domain recommender: prep, train, eval, sweep, report"};
  app.require_subcommand(1);

  // prep ---------------------------------------------------------------
  adc::cli::PrepOptions prep;
  std::vector<std::string> domain_args;
  auto* prep_cmd = app.add_subcommand("prep", "Load or generate domains, split, write stats");
  prep_cmd->add_option("--domain", domain_args,
                       "Domain rating file as name=path (repeatable)");
  prep_cmd->add_option("--synthetic", prep.synthetic,
                       "Generate synthetic domains: p,users,items,overlap,noise");
  prep_cmd->add_option("--synthetic-items", prep.synthetic_items,
                       "Per-domain item counts, comma separated");
  prep_cmd->add_option("--synthetic-density", prep.synthetic_density,
                       "Per-domain densities, comma separated");
  prep_cmd->add_option("--synthetic-latent-dim", prep.synthetic_latent_dim,
                       "Latent dimension of the generator");
  prep_cmd->add_option("--target", prep.target, "Target domain index")->required();
  prep_cmd->add_option("--seed", prep.seed, "Split / generator seed");
  prep_cmd->add_option("--out", prep.out_dir, "Prep output directory")->required();

  // train --------------------------------------------------------------
  adc::cli::TrainOptions train;
  std::vector<std::string> set_args;
  auto* train_cmd = app.add_subcommand("train", "Run the full training procedure");
  train_cmd->add_option("--prep", train.prep_dir, "Prep directory")->required();
  train_cmd->add_option("--config", train.config_file, "key=value config file");
  train_cmd->add_option("--set", set_args, "Config override key=value (repeatable)");
  train_cmd->add_option("--out", train.out_dir, "Run output directory");
  train_cmd->add_flag("--with-baseline", train.with_baseline,
                      "Also train the single-domain BPR baseline");
  train_cmd->add_flag("--dry-run", train.dry_run, "Validate config and data, train nothing");
  train_cmd->add_flag("--resume", train.resume, "Continue from the run's checkpoint");
  double gamma_flag = -1.0;
  int h_flag = -1;
  long long seed_flag = -1;
  train_cmd->add_option("--gamma", gamma_flag, "Shortcut for --set gamma=...");
  train_cmd->add_option("--h", h_flag, "Shortcut for --set h=...");
  train_cmd->add_option("--seed", seed_flag, "Shortcut for --set seed=...");

  // eval ---------------------------------------------------------------
  adc::cli::EvalOptions eval;
  std::string cutoffs_arg;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate run directories on the test split");
  eval_cmd->add_option("--run", eval.run_dirs, "Run directory (repeatable)")->required();
  eval_cmd->add_option("--cutoffs", cutoffs_arg, "Comma-separated cutoffs (default 5,10,15,20)");
  eval_cmd->add_option("--out", eval.out_dir, "Where report files go (default first run dir)");

  // sweep --------------------------------------------------------------
  adc::cli::SweepOptions sweep;
  std::string values_arg;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train/eval over an axis of h or gamma values");
  sweep_cmd->add_option("--prep", sweep.prep_dirs, "Prep directory (repeatable)")->required();
  sweep_cmd->add_option("--axis", sweep.axis, "h or gamma")->required();
  sweep_cmd->add_option("--values", values_arg, "Comma-separated values")->required();
  sweep_cmd->add_option("--config", sweep.config_file, "key=value config file");
  sweep_cmd->add_option("--set", sweep.overrides, "Config override key=value (repeatable)");
  sweep_cmd->add_option("--out", sweep.out_dir, "Sweep output directory")->required();
  sweep_cmd->add_option("--repeats", sweep.repeats, "Training seeds per value");
  sweep_cmd->add_option("--parallel", sweep.parallel, "Concurrent runs (default 1)");

  // report -------------------------------------------------------------
  adc::cli::ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Verify a run's manifest and reprint reports");
  report_cmd->add_option("--run", report.run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : adc::cli::kExitUsage;
  }

  if (prep_cmd->parsed()) {
    for (const auto& arg : domain_args) {
      auto eq = arg.find('=');
      if (eq == std::string::npos) {
        std::cerr << "config error: --domain expects name=path, got " << arg << '\n';
        return adc::cli::kExitUsage;
      }
      prep.domain_files.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
    }
    return adc::cli::cmd_prep(prep, std::cout);
  }
  if (train_cmd->parsed()) {
    train.overrides = set_args;
    if (gamma_flag >= 0.0) train.overrides.push_back("gamma=" + adc::fmt_double(gamma_flag));
    if (h_flag >= 0) train.overrides.push_back("h=" + std::to_string(h_flag));
    if (seed_flag >= 0) train.overrides.push_back("seed=" + std::to_string(seed_flag));
    return adc::cli::cmd_train(train, std::cout);
  }
  if (eval_cmd->parsed()) {
    if (!cutoffs_arg.empty()) {
      eval.cutoffs.clear();
      std::istringstream ss(cutoffs_arg);
      std::string f;
      while (std::getline(ss, f, ',')) {
        try {
          eval.cutoffs.push_back(std::stoi(f));
        } catch (const std::exception&) {
          std::cerr << "config error: bad cutoff: " << f << '\n';
          return adc::cli::kExitUsage;
        }
      }
    }
    return adc::cli::cmd_eval(eval, std::cout);
  }
  if (sweep_cmd->parsed()) {
    std::istringstream ss(values_arg);
    std::string f;
    while (std::getline(ss, f, ',')) {
      try {
        sweep.values.push_back(std::stod(f));
      } catch (const std::exception&) {
        std::cerr << "config error: bad value: " << f << '\n';
        return adc::cli::kExitUsage;
      }
    }
    return adc::cli::cmd_sweep(sweep, std::cout);
  }
  if (report_cmd->parsed()) return adc::cli::cmd_report(report, std::cout);
  return adc::cli::kExitUsage;
}
