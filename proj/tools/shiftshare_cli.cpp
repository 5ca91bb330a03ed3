// shiftshare: estimation, inference and placebo simulation for shift-share
// regressions.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "shiftshare/cli.hpp"

namespace {

using shiftshare::cli::Format;
using shiftshare::cli::Mode;
using shiftshare::cli::RunConfig;

void add_data_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--regions", rc.regions, "regions CSV: region,y[,y2][,weight][,cluster],z1..zK");
  cmd->add_option("--shares", rc.shares, "long shares CSV: region,sector,share");
  cmd->add_option("--shifters", rc.shifters, "shifters CSV: sector,shifter[,cluster]");
  cmd->add_flag("--panel", rc.panel, "inputs carry a period column; expand sector-period pairs");
  cmd->add_flag("--cluster-shifters", rc.cluster_shifters,
                "cluster sectors (shifters file 'cluster' column, or sector over time in panels)");
  cmd->add_flag("--weights", rc.weights, "weight observations by the regions 'weight' column");
  cmd->add_flag("--intercept,!--no-intercept", rc.intercept, "include an intercept (default on)");
}

void add_output_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--out", rc.out, "output path (default stdout)");
  cmd->add_option("--format", rc.format, "json or csv")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, Format>{{"json", Format::json}, {"csv", Format::csv}}));
}

void add_inference_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--methods", rc.methods,
                  "comma list of robust,cluster,akm,akm0,akm_clustered,akm0_clustered,akm_loo")
      ->delimiter(',');
  cmd->add_option("--level", rc.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--null", rc.null_value, "report rejection of H0: coefficient = value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift-share regression estimation and inference"};
  app.require_subcommand(1);
  RunConfig rc;

  auto* est = app.add_subcommand("estimate", "OLS on the shift-share regressor");
  add_data_flags(est, rc);
  add_inference_flags(est, rc);
  add_output_flags(est, rc);

  auto* iv = app.add_subcommand("iv", "IV with the shift-share instrument (y2 = treatment)");
  add_data_flags(iv, rc);
  add_inference_flags(iv, rc);
  add_output_flags(iv, rc);
  iv->add_option("--loo", rc.loo,
                 "leave-one-out input CSV: region,sector,agg_weight,shock");

  auto* sim = app.add_subcommand("simulate", "placebo Monte Carlo from a JSON config");
  sim->add_option("--config", rc.config, "placebo config JSON")->required();
  sim->add_option("--seed", rc.seed, "override the config seed");
  sim->add_option("--workers", rc.workers, "worker threads (results do not depend on it)");
  add_output_flags(sim, rc);

  auto* diag = app.add_subcommand("diagnose", "share concentration diagnostics");
  add_data_flags(diag, rc);
  add_output_flags(diag, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : shiftshare::cli::kExitInput;
  }

  if (est->parsed()) rc.mode = Mode::estimate;
  if (iv->parsed()) rc.mode = Mode::iv;
  if (sim->parsed()) rc.mode = Mode::simulate;
  if (diag->parsed()) rc.mode = Mode::diagnose;
  return shiftshare::cli::run(rc);
}
