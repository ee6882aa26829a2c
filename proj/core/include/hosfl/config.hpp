#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "hosfl/data.hpp"
#include "hosfl/latency.hpp"
#include "hosfl/protocol.hpp"
#include "hosfl/split_model.hpp"
#include "hosfl/traffic.hpp"

namespace hosfl {

/// Synthetic task. Input width comes from model.layer_dims.front(); the class
/// count (or regression output width) from model.layer_dims.back().
struct DataConfig {
  TaskKind task = TaskKind::classification_blobs;
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 500;
  double separation = 2.0;  // blobs
  double noise = 0.0;       // regression target noise

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct OutputConfig {
  std::string dir = "out";
  std::string metrics = "metrics.jsonl";
  std::string traffic = "traffic.csv";
  std::string checksum = "checksum.txt";

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::hosfl;
  SplitModelConfig model;
  HyperParams hp;
  DataConfig data;
  PartitionSpec partition;  // clients and seed are filled from hp / root_seed
  std::uint64_t sample_budget = 0;
  std::uint64_t root_seed = 0;
  double init_scale = 1.0;
  std::size_t diagnose_trials = 20000;
  OutputConfig output;

  /// Cross-field checks; throws ConfigError naming the field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses the JSON experiment document. `protocol` and `model` are required;
/// everything else has defaults (P = 5, mu = 1e-3). Unknown keys are rejected.
/// Syntax errors report line and column.
ExperimentConfig parse_config(std::string_view text);
std::string serialize_config(const ExperimentConfig& cfg);

struct LatencyConfig {
  NetworkProfile network;
  DeviceProfile device;
  WorkloadProfile workload;
  std::size_t min_client_layers = 2;
  std::size_t max_client_layers = 8;
  bool noise = false;
  SpeedNoise noise_model;
};

/// Same document conventions as parse_config; every key optional.
LatencyConfig parse_latency_config(std::string_view text);

}  // namespace hosfl
