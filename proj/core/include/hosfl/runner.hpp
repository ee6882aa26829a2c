#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hosfl/config.hpp"
#include "hosfl/protocol.hpp"

namespace hosfl {

/// Train/eval data, shards and the training setup derived from one config.
/// Train and eval sets come from a single generator call so blob centers
/// (or the regression teacher) are shared.
TrainingSetup build_training_setup(const ExperimentConfig& cfg);

/// 64-bit FNV-1a over the little-endian IEEE-754 bytes of theta_c then theta_s,
/// as 16 lowercase hex digits.
std::string parameters_checksum(std::span<const double> theta_c, std::span<const double> theta_s);

/// First line of every metrics file.
std::string metrics_header_line(const ExperimentConfig& cfg);
/// One JSON object per completed round.
std::string metrics_record_line(const MetricsRecord& rec);

struct RunOutputs {
  TrainingResult result;
  std::filesystem::path metrics_path;
  std::filesystem::path traffic_path;
  std::filesystem::path checksum_path;
  std::string checksum;
};

/// Trains and writes metrics (JSON lines), the traffic breakdown (CSV) and the
/// final-parameter checksum under `out_dir`.
RunOutputs run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Estimator diagnostics at the initial parameters on the first client's first
/// batch, with measured Gamma and the closed-form bounds, as a JSON document.
std::string diagnose_estimator_report(const ExperimentConfig& cfg);

/// Closed-form bytes per round for every protocol under cfg's shapes:
/// `protocol,kind,direction,bytes_per_round`.
void write_traffic_report(std::ostream& out, const ExperimentConfig& cfg);

void write_latency_sweep(std::ostream& out, const LatencyConfig& cfg);

}  // namespace hosfl
