// hosfl: command-line front end for the split federated simulator.
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hosfl/config.hpp"
#include "hosfl/error.hpp"
#include "hosfl/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config, "JSON configuration file");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Root seed; overrides the config's root_seed");
  cmd->add_option("--out", flags.out, "Output directory; overrides output.dir");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hosfl::ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

hosfl::ExperimentConfig load_experiment(const CommonFlags& flags) {
  hosfl::ExperimentConfig cfg = hosfl::parse_config(slurp(flags.config));
  if (flags.seed) cfg.root_seed = *flags.seed;
  if (!flags.out.empty()) cfg.output.dir = flags.out;
  cfg.validate();
  return cfg;
}

// Writes to <out>/<name> when --out was given, stdout otherwise.
void emit(const CommonFlags& flags, const std::string& name, const std::string& text) {
  if (flags.out.empty()) {
    std::cout << text;
    return;
  }
  std::filesystem::create_directories(flags.out);
  const auto path = std::filesystem::path(flags.out) / name;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw hosfl::Error("cannot open '" + path.string() + "' for writing");
  f << text;
  std::cerr << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-order split federated learning simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags, diag_flags, traffic_flags;
  std::string dump_dataset;

  auto* run = app.add_subcommand("run", "Train one protocol; write metrics, traffic and checksum");
  add_common(run, run_flags, true);
  run->add_option("--dump-dataset", dump_dataset, "Also write the training set to this file");

  auto* sweep = app.add_subcommand("sweep-latency", "Overlap feasibility across client depths");
  add_common(sweep, sweep_flags, false);

  auto* diag = app.add_subcommand("diagnose-estimator",
                                  "Monte Carlo bias and second moment against closed-form bounds");
  add_common(diag, diag_flags, true);

  auto* traffic = app.add_subcommand("report-traffic", "Closed-form bytes per round per protocol");
  add_common(traffic, traffic_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      const auto cfg = load_experiment(run_flags);
      const auto out = hosfl::run_experiment(cfg, cfg.output.dir);
      if (!dump_dataset.empty()) {
        const auto setup = hosfl::build_training_setup(cfg);
        std::ofstream f(dump_dataset, std::ios::binary | std::ios::trunc);
        if (!f) throw hosfl::Error("cannot open '" + dump_dataset + "' for writing");
        hosfl::save_dataset(f, *setup.train);
      }
      std::cout << "rounds " << out.result.log.size() << "\n"
                << "checksum " << out.checksum << "\n"
                << "metrics " << out.metrics_path.string() << "\n"
                << "traffic " << out.traffic_path.string() << "\n";
    } else if (*sweep) {
      hosfl::LatencyConfig cfg =
          sweep_flags.config.empty() ? hosfl::LatencyConfig{}
                                     : hosfl::parse_latency_config(slurp(sweep_flags.config));
      if (sweep_flags.seed) cfg.noise_model.seed = *sweep_flags.seed;
      std::ostringstream csv;
      hosfl::write_latency_sweep(csv, cfg);
      emit(sweep_flags, "latency_sweep.csv", csv.str());
    } else if (*diag) {
      emit(diag_flags, "estimator.json",
           hosfl::diagnose_estimator_report(load_experiment(diag_flags)));
    } else if (*traffic) {
      std::ostringstream csv;
      hosfl::write_traffic_report(csv, load_experiment(traffic_flags));
      emit(traffic_flags, "traffic_closed_form.csv", csv.str());
    }
  } catch (const hosfl::ConfigError& e) {
    std::cerr << "hosfl: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hosfl: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
