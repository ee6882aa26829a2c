#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "hosfl/data.hpp"
#include "hosfl/numeric.hpp"
#include "hosfl/split_model.hpp"
#include "hosfl/traffic.hpp"
#include "hosfl/zo_estimator.hpp"

namespace hosfl {

enum class OptimizerKind { sgd, adam };
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

struct HyperParams {
  double eta = 0.01;
  std::size_t rounds = 0;       // T, an upper bound on rounds
  std::size_t clients = 1;      // M
  std::size_t sampled = 1;      // K
  std::size_t batch_size = 32;  // B
  ZoConfig zo;
  OptimizerKind optimizer = OptimizerKind::sgd;
  AdamParams adam;

  /// Throws ConfigError unless 1 <= K <= M, eta > 0, B >= 1 and zo is valid.
  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Per-parameter-vector optimizer state. A value: copying it forks the state.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(OptimizerKind kind, std::size_t dim, AdamParams adam = {});

  /// theta <- theta - eta * step(grad). Deterministic; SGD is exactly axpy(-eta).
  void apply(std::span<double> theta, std::span<const double> grad, double eta);

  /// Elementwise mean of moment buffers; steps must agree.
  static OptimizerState average(std::span<const OptimizerState> states);

  OptimizerKind kind() const { return kind_; }
  std::uint64_t steps() const { return steps_; }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  AdamParams adam_;
  Vector first_;
  Vector second_;
  std::uint64_t steps_ = 0;
};

/// Broadcast history of one completed hybrid-order round.
struct RoundRecord {
  std::uint64_t round = 0;
  std::vector<std::uint64_t> seeds;
  Vector v_bar;
  double eta_used = 0.0;
};

struct ClientState {
  std::size_t id = 0;
  Vector theta_c;
  std::uint64_t t_sync = 0;  // first round whose update this client has not applied
  std::vector<std::size_t> shard;
  OptimizerState optimizer;
};

struct ServerState {
  Vector theta_s;
  std::uint64_t round = 0;
  std::vector<RoundRecord> history;  // entries carry their round; contiguous
  OptimizerState server_optimizer;
  /// Canonical client parameters for evaluation, advanced by the same rule as clients.
  Vector theta_c_global;
  OptimizerState client_optimizer;
};

struct RoundMetrics {
  std::uint64_t round = 0;
  double train_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t samples = 0;
  std::vector<std::size_t> sampled;
};

/// Everything one simulated deployment owns.
struct Federation {
  SplitModelConfig model;
  HyperParams hp;
  std::uint64_t root_seed = 0;
  std::shared_ptr<const Dataset> data;
  ServerState server;
  std::vector<ClientState> clients;
  TrafficLedger ledger;
};

/// Builds server and client state; every client starts from client_part(initial_theta).
Federation make_federation(const SplitModelConfig& model, const HyperParams& hp,
                           std::shared_ptr<const Dataset> data, const Shards& shards,
                           std::uint64_t root_seed, std::span<const double> initial_theta);

/// K of M client ids (0-based) uniformly without replacement, sorted ascending.
/// A pure function of (root_seed, round).
std::vector<std::size_t> sample_clients(std::size_t clients, std::size_t sampled,
                                        std::uint64_t root_seed, std::uint64_t round);

/// B sample indices drawn with replacement from the client's shard.
Batch client_batch(const Federation& fed, const ClientState& client, std::uint64_t round);

/// Replays missed rounds [client.t_sync, current_round) from (seed, scalar)
/// history, in round order, through the same reconstruction and optimizer
/// transition as a live update. Only tuples travel: each replayed round costs
/// P scalars and P seeds of downlink. Throws StalenessError if a needed round
/// is absent from `history`.
void client_sync(ClientState& client, std::span<const RoundRecord> history,
                 std::uint64_t current_round, const HyperParams& hp,
                 TrafficLedger* ledger = nullptr);

/// One hybrid-order round over `sampled`, which must be synchronized.
/// Nothing is committed if any phase throws.
RoundMetrics run_round_hosfl(Federation& fed, std::span<const std::size_t> sampled);
/// Split-federated baseline: exact client backprop through lambda, then FedAvg.
RoundMetrics run_round_sfl(Federation& fed, std::span<const std::size_t> sampled);
/// Zeroth-order split baseline: one full-model SPSA direction per round.
RoundMetrics run_round_zosfl(Federation& fed, std::span<const std::size_t> sampled);

/// Samples S_t, synchronizes its members (hosfl) and runs one round.
RoundMetrics step(Federation& fed, Protocol protocol);

/// Current composed parameters [theta_c_global; theta_s].
Vector global_parameters(const Federation& fed);

TrafficShape traffic_shape(const HyperParams& hp, const SplitModelConfig& model);
ByteCounts closed_form_traffic(const HyperParams& hp, const SplitModelConfig& model,
                               Protocol protocol);

struct MetricsRecord {
  std::uint64_t round = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  double grad_norm = 0.0;
  std::uint64_t samples_processed = 0;
  ByteCounts bytes{};
};

struct TrainingSetup {
  Protocol protocol = Protocol::hosfl;
  SplitModelConfig model;
  HyperParams hp;
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> eval;  // may be null
  Shards shards;
  std::uint64_t root_seed = 0;
  std::uint64_t sample_budget = 0;  // 0: bounded by hp.rounds only
  double init_scale = 1.0;
};

struct TrainingResult {
  std::vector<MetricsRecord> log;
  Vector theta_c;
  Vector theta_s;
  TrafficLedger ledger;
};

/// Runs rounds until hp.rounds are done or the next round would exceed the
/// processed-sample budget (K * B samples per round).
TrainingResult run_training(const TrainingSetup& setup);

}  // namespace hosfl
