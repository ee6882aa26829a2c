#include "hosfl/latency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"

namespace hosfl {

WorkloadProfile WorkloadProfile::dense(std::size_t batch, std::size_t seq_len, std::size_t hidden,
                                       std::size_t total_layers, std::size_t client_layers) {
  WorkloadProfile w;
  w.batch = batch;
  w.seq_len = seq_len;
  w.hidden = hidden;
  w.total_layers = total_layers;
  w.client_layers = client_layers;
  w.kv_dim = hidden;
  w.ffn_dim = 4 * hidden;
  w.gated_ffn = false;
  return w;
}

double transformer_layer_flops(std::size_t batch, std::size_t seq_len, std::size_t hidden) {
  const double b = static_cast<double>(batch);
  const double s = static_cast<double>(seq_len);
  const double h = static_cast<double>(hidden);
  return 24.0 * b * s * h * h + 4.0 * b * s * s * h;
}

double layer_forward_flops(const WorkloadProfile& w) {
  const double b = static_cast<double>(w.batch);
  const double s = static_cast<double>(w.seq_len);
  const double h = static_cast<double>(w.hidden);
  const double kv = static_cast<double>(w.kv_dim);
  const double ffn = static_cast<double>(w.ffn_dim);
  const double mlp_mats = w.gated_ffn ? 3.0 : 2.0;
  const double params = 2.0 * h * h + 2.0 * h * kv + mlp_mats * h * ffn;
  return 2.0 * b * s * params + 4.0 * b * s * s * h;
}

void validate_profiles(const NetworkProfile& net, const DeviceProfile& dev,
                       const WorkloadProfile& work) {
  if (!(net.uplink_bps > 0.0) || !(net.downlink_bps > 0.0) || !(net.rtt_seconds >= 0.0)) {
    throw ConfigError("network: bandwidths must be > 0 and rtt >= 0");
  }
  if (!(dev.client_flops_per_s > 0.0) || !(dev.server_flops_per_s > 0.0)) {
    throw ConfigError("device: compute speeds must be > 0");
  }
  if (work.client_layers < 1 || work.client_layers >= work.total_layers) {
    throw ConfigError("workload: need 1 <= client_layers < total_layers");
  }
  if (work.batch == 0 || work.seq_len == 0 || work.hidden == 0 || !(work.bytes_per_element > 0.0)) {
    throw ConfigError("workload: batch, seq_len, hidden and bytes_per_element must be positive");
  }
}

RoundTimeline round_timeline(const NetworkProfile& net, const DeviceProfile& dev,
                             const WorkloadProfile& work, std::size_t perturbations) {
  const double layer = layer_forward_flops(work);
  const double activation_bits = static_cast<double>(work.batch) *
                                 static_cast<double>(work.seq_len) *
                                 static_cast<double>(work.hidden) * work.bytes_per_element * 8.0;
  const double half_rtt = net.rtt_seconds / 2.0;
  const auto client_layers = static_cast<double>(work.client_layers);
  const auto server_layers = static_cast<double>(work.total_layers - work.client_layers);

  RoundTimeline tl;
  tl.t_client_fwd = client_layers * layer / dev.client_flops_per_s;
  tl.t_uplink = activation_bits / net.uplink_bps + half_rtt;
  tl.t_server = 3.0 * server_layers * layer / dev.server_flops_per_s;
  tl.t_downlink = activation_bits / net.downlink_bps + half_rtt;
  tl.idle_window = tl.t_uplink + tl.t_server + tl.t_downlink;
  tl.t_perturb_total = static_cast<double>(perturbations) * tl.t_client_fwd;
  return tl;
}

std::size_t max_overlapped_perturbations(const NetworkProfile& net, const DeviceProfile& dev,
                                         const WorkloadProfile& work) {
  const RoundTimeline tl = round_timeline(net, dev, work, 0);
  if (!std::isfinite(tl.t_client_fwd)) return 0;
  if (tl.t_client_fwd <= 0.0) {
    throw ConfigError("workload: client forward time must be positive");
  }
  return static_cast<std::size_t>(std::floor(tl.idle_window / tl.t_client_fwd));
}

OverlapStats noisy_max_overlapped_perturbations(const NetworkProfile& net,
                                                const DeviceProfile& dev,
                                                const WorkloadProfile& work,
                                                const SpeedNoise& noise) {
  if (noise.trials == 0) throw ConfigError("noise.trials: must be >= 1");
  CounterRng rng(noise.seed);
  auto jitter = [&](double v) { return v * (1.0 + noise.fraction * (2.0 * rng.uniform() - 1.0)); };
  OverlapStats st;
  st.min = SIZE_MAX;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < noise.trials; ++i) {
    NetworkProfile n = net;
    DeviceProfile d = dev;
    n.uplink_bps = jitter(n.uplink_bps);
    n.downlink_bps = jitter(n.downlink_bps);
    d.client_flops_per_s = jitter(d.client_flops_per_s);
    d.server_flops_per_s = jitter(d.server_flops_per_s);
    const std::size_t p = max_overlapped_perturbations(n, d, work);
    sum += static_cast<double>(p);
    sum_sq += static_cast<double>(p) * static_cast<double>(p);
    st.min = std::min(st.min, p);
    st.max = std::max(st.max, p);
  }
  const auto n = static_cast<double>(noise.trials);
  st.mean = sum / n;
  st.stddev = std::sqrt(std::max(0.0, sum_sq / n - st.mean * st.mean));
  return st;
}

std::vector<LatencySweepRow> latency_sweep(const NetworkProfile& net, const DeviceProfile& dev,
                                           const WorkloadProfile& work, std::size_t min_layers,
                                           std::size_t max_layers, const SpeedNoise* noise) {
  if (min_layers < 1 || min_layers > max_layers) {
    throw ConfigError("sweep: need 1 <= min_client_layers <= max_client_layers");
  }
  std::vector<LatencySweepRow> rows;
  for (std::size_t lc = min_layers; lc <= max_layers; ++lc) {
    WorkloadProfile w = work;
    w.client_layers = lc;
    validate_profiles(net, dev, w);
    LatencySweepRow row;
    row.client_layers = lc;
    row.timeline = round_timeline(net, dev, w, 0);
    row.p_max = max_overlapped_perturbations(net, dev, w);
    row.timeline.t_perturb_total = static_cast<double>(row.p_max) * row.timeline.t_client_fwd;
    if (noise != nullptr) {
      SpeedNoise per_row = *noise;
      per_row.seed = derive_stream(noise->seed, 0x6c6174, lc);
      row.noisy = noisy_max_overlapped_perturbations(net, dev, w, per_row);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_latency_sweep_csv(std::ostream& out, const std::vector<LatencySweepRow>& rows,
                             bool with_noise) {
  out << "client_layers,t_client_fwd,t_uplink,t_server,t_downlink,idle_window,t_perturb_total,p_max";
  if (with_noise) out << ",p_max_mean,p_max_std,p_max_min,p_max_max";
  out << '\n';
  char buf[512];
  for (const auto& r : rows) {
    const auto& t = r.timeline;
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu", r.client_layers,
                  t.t_client_fwd, t.t_uplink, t.t_server, t.t_downlink, t.idle_window,
                  t.t_perturb_total, r.p_max);
    out << buf;
    if (with_noise) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%zu,%zu", r.noisy.mean, r.noisy.stddev,
                    r.noisy.min, r.noisy.max);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace hosfl
