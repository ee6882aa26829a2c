#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace hosfl {

// Defaults describe a 5G edge link, an edge accelerator and an A100-class server.
struct NetworkProfile {
  double uplink_bps = 30e6;
  double downlink_bps = 200e6;
  double rtt_seconds = 0.030;
};

struct DeviceProfile {
  double client_flops_per_s = 2.0e12;
  double server_flops_per_s = 312e12;
};

/// Split decoder-only transformer workload. Defaults are the LLaMA-3.2-1B
/// geometry: grouped-query attention (kv_dim 512) and a gated 8192-wide MLP.
struct WorkloadProfile {
  std::size_t batch = 32;
  std::size_t seq_len = 256;
  std::size_t hidden = 2048;
  std::size_t total_layers = 18;
  std::size_t client_layers = 4;
  double bytes_per_element = 2.0;  // FP16 activations
  std::size_t kv_dim = 512;
  std::size_t ffn_dim = 8192;
  bool gated_ffn = true;

  /// Classic GPT block: kv_dim = hidden, ffn = 4 hidden, ungated.
  static WorkloadProfile dense(std::size_t batch, std::size_t seq_len, std::size_t hidden,
                               std::size_t total_layers, std::size_t client_layers);
};

/// Dense-block forward estimate 24 B S H^2 + 4 B S^2 H.
double transformer_layer_flops(std::size_t batch, std::size_t seq_len, std::size_t hidden);

/// Forward FLOPs of one block of `work`:
/// 2 B S (2 H^2 + 2 H kv + m H ffn) + 4 B S^2 H with m = 3 gated, 2 ungated.
/// Equals transformer_layer_flops for WorkloadProfile::dense.
double layer_forward_flops(const WorkloadProfile& work);

struct RoundTimeline {
  double t_client_fwd = 0.0;
  double t_uplink = 0.0;
  double t_server = 0.0;
  double t_downlink = 0.0;
  double t_perturb_total = 0.0;
  double idle_window = 0.0;
};

/// Client forward over L_c blocks; activation up and lambda down, each paying
/// half the RTT; server forward+backward (3x forward) over L - L_c blocks.
/// The idle window is uplink + server + downlink.
RoundTimeline round_timeline(const NetworkProfile& net, const DeviceProfile& dev,
                             const WorkloadProfile& work, std::size_t perturbations);

/// floor(idle_window / t_client_fwd); 0 when the client forward is unbounded.
std::size_t max_overlapped_perturbations(const NetworkProfile& net, const DeviceProfile& dev,
                                         const WorkloadProfile& work);

/// Each of the four speeds is scaled by (1 + fraction * U[-1, 1]) per trial.
struct SpeedNoise {
  double fraction = 0.1;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

struct OverlapStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
};

OverlapStats noisy_max_overlapped_perturbations(const NetworkProfile& net,
                                                const DeviceProfile& dev,
                                                const WorkloadProfile& work,
                                                const SpeedNoise& noise);

/// Throws ConfigError on non-positive speeds or an invalid layer split.
void validate_profiles(const NetworkProfile& net, const DeviceProfile& dev,
                       const WorkloadProfile& work);

struct LatencySweepRow {
  std::size_t client_layers = 0;
  RoundTimeline timeline;
  std::size_t p_max = 0;
  OverlapStats noisy;  // zero unless noise was requested
};

std::vector<LatencySweepRow> latency_sweep(const NetworkProfile& net, const DeviceProfile& dev,
                                           const WorkloadProfile& work, std::size_t min_layers,
                                           std::size_t max_layers, const SpeedNoise* noise);

/// CSV with header; noise columns only when `with_noise`.
void write_latency_sweep_csv(std::ostream& out, const std::vector<LatencySweepRow>& rows,
                             bool with_noise);

}  // namespace hosfl
