#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rsctl/commands.hpp"

namespace cli = rsctl::cli;

int main(int argc, char** argv) {
  CLI::App app{"Ride-sourcing driver positioning: ingest demand, run controlled simulations, report."};
  app.set_version_flag("--version", std::string(cli::kToolVersion));
  app.require_subcommand(1);

  cli::IngestOptions ingest;
  auto* in = app.add_subcommand("ingest", "Cluster a pickup CSV into a graph snapshot");
  in->add_option("csv", ingest.csv, "CSV with lat, lon and timestamp columns")->required();
  in->add_option("--out", ingest.out, "Graph JSON to write")->required();
  in->add_option("--radius", ingest.radius, "Cluster diameter bound in meters")->capture_default_str();
  in->add_option("--speed", ingest.speed, "Travel speed in km/h")->capture_default_str();
  in->add_option("--horizon", ingest.horizon, "Observation window in minutes (0: timestamp span)")->capture_default_str();
  in->add_option("--keep", ingest.keep, "Keep only the busiest clusters (0: all)")->capture_default_str();
  in->add_option("--max-rate", ingest.max_rate, "Rescale so the busiest vertex has this rate (0: off)")
      ->capture_default_str();
  in->add_flag("--force", ingest.force, "Overwrite existing output");

  cli::SynthOptions synth;
  auto* sy = app.add_subcommand("synth", "Write a desk-scale synthetic city graph");
  sy->add_option("--out", synth.out, "Graph JSON to write")->required();
  sy->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  sy->add_option("--pickups", synth.pickups, "Synthetic pickups before clustering")->capture_default_str();
  sy->add_option("--keep", synth.keep, "Busiest clusters kept")->capture_default_str();
  sy->add_option("--max-rate", synth.max_rate, "Rate of the busiest vertex per minute")->capture_default_str();
  sy->add_flag("--force", synth.force, "Overwrite existing output");

  cli::RunOptions run;
  std::optional<std::string> config, control, scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<int> drivers, requests, reps;
  auto* ru = app.add_subcommand("run", "Simulate an episode (reps = 1) or a matched batch");
  ru->add_option("--graph", run.graph, "Graph JSON from ingest or synth")->required();
  ru->add_option("--config", config, "Run config JSON; flags override its fields");
  ru->add_option("--out", run.out, "Output directory")->required();
  ru->add_option("--seed", seed, "Episode seed, or master seed of a batch");
  ru->add_option("--control", control, "none, info or pay")->check(CLI::IsMember({"none", "info", "pay"}));
  ru->add_option("--beta", beta, "Service weight of pay control");
  ru->add_option("--drivers", drivers, "Fleet size");
  ru->add_option("--scenario", scenario, "random or jammed")->check(CLI::IsMember({"random", "jammed"}));
  ru->add_option("--requests", requests, "Requests per episode");
  ru->add_option("--reps", reps, "Repetitions; more than one runs a batch");
  ru->add_option("--threads", run.threads, "Worker threads for batches (0: all cores)");
  ru->add_flag("--force", run.force, "Overwrite existing outputs");

  cli::ReportOptions report;
  auto* re = app.add_subcommand("report", "Aggregate run directories into quartile tables");
  re->add_option("results", report.results, "Run directory or a directory of run directories")->required();
  re->add_option("--out", report.out, "Report CSV (default: <results>/report.csv)");
  re->add_flag("--force", report.force, "Overwrite an existing report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kConfigError;
  }

  try {
    if (*in) {
      cli::cmd_ingest(ingest, std::cerr);
    } else if (*sy) {
      cli::cmd_synth(synth, std::cerr);
    } else if (*ru) {
      if (config) run.config = *config;
      auto& o = run.overrides;
      if (seed) o["seed"] = *seed;
      if (control) o["control"] = *control;
      if (beta) o["beta"] = *beta;
      if (drivers) o["drivers"] = *drivers;
      if (scenario) o["scenario"] = *scenario;
      if (requests) o["requests"] = *requests;
      if (reps) o["reps"] = *reps;
      cli::cmd_run(run, std::cerr);
    } else if (*re) {
      const auto r = cli::cmd_report(report, std::cerr);
      if (!r.missing.empty()) return cli::kDataError;
    }
  } catch (const rsctl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kConfigError;
  } catch (const rsctl::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return cli::kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailure;
  }
  return cli::kOk;
}
