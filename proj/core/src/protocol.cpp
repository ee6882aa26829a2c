#include "hosfl/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"

namespace hosfl {
namespace {

constexpr std::uint64_t kSamplingDomain = 0x73616d70;  // "samp"
constexpr std::uint64_t kBatchDomain = 0x62617463;     // "batc"
constexpr std::uint64_t kInitDomain = 0x696e6974;      // "init"

void check_sampled(const Federation& fed, std::span<const std::size_t> sampled) {
  if (sampled.empty()) throw ProtocolError("round has no sampled clients");
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    if (sampled[i] >= fed.clients.size()) {
      throw ProtocolError("sampled client id " + std::to_string(sampled[i]) + " out of range");
    }
    if (i > 0 && sampled[i] <= sampled[i - 1]) {
      throw ProtocolError("sampled client ids must be strictly ascending");
    }
  }
}

// Mean of equally sized vectors, summed in the given order then divided.
Vector ordered_mean(std::span<const Vector> parts) {
  Vector mean(parts.front().size(), 0.0);
  for (const Vector& p : parts) axpy_inplace(1.0, p, mean);
  const auto k = static_cast<double>(parts.size());
  for (double& v : mean) v /= k;
  return mean;
}

std::uint64_t label_bytes(const Batch& batch) {
  if (!batch.labels.classes.empty()) return batch.labels.classes.size() * kBytesPerClassLabel;
  return batch.labels.targets.size() * kBytesPerFloat;
}

void record_upload(TrafficLedger& ledger, const Matrix& z, const Batch& batch) {
  ledger.record(MessageKind::ActivationUp, z.size() * kBytesPerFloat);
  ledger.record(MessageKind::LabelUp, label_bytes(batch));
}

void commit(Federation& fed, TrafficLedger& delta) {
  ++fed.server.round;
  fed.ledger.merge(delta);
  fed.ledger.close_round();
}

}  // namespace

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

void HyperParams::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("hp.eta: must be > 0");
  if (clients < 1) throw ConfigError("hp.clients: must be >= 1");
  if (sampled < 1 || sampled > clients) {
    throw ConfigError("hp.sampled: need 1 <= K <= M (K=" + std::to_string(sampled) +
                      ", M=" + std::to_string(clients) + ")");
  }
  if (batch_size < 1) throw ConfigError("hp.batch_size: must be >= 1");
  zo.validate();
  if (optimizer == OptimizerKind::adam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.epsilon > 0.0)) {
      throw ConfigError("hp.adam: need 0 <= beta < 1 and epsilon > 0");
    }
  }
}

OptimizerState::OptimizerState(OptimizerKind kind, std::size_t dim, AdamParams adam)
    : kind_(kind), adam_(adam) {
  if (kind_ == OptimizerKind::adam) {
    first_.assign(dim, 0.0);
    second_.assign(dim, 0.0);
  }
}

void OptimizerState::apply(std::span<double> theta, std::span<const double> grad, double eta) {
  require_same_dim(theta.size(), grad.size(), "optimizer step");
  ++steps_;
  if (kind_ == OptimizerKind::sgd) {
    axpy_inplace(-eta, grad, theta);
    return;
  }
  require_same_dim(first_.size(), grad.size(), "adam state");
  const double b1 = adam_.beta1;
  const double b2 = adam_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    first_[i] = b1 * first_[i] + (1.0 - b1) * grad[i];
    second_[i] = b2 * second_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = first_[i] / c1;
    const double v_hat = second_[i] / c2;
    theta[i] -= eta * m_hat / (std::sqrt(v_hat) + adam_.epsilon);
  }
}

OptimizerState OptimizerState::average(std::span<const OptimizerState> states) {
  if (states.empty()) throw ProtocolError("cannot average zero optimizer states");
  OptimizerState out = states.front();
  if (out.kind_ == OptimizerKind::sgd) return out;
  std::fill(out.first_.begin(), out.first_.end(), 0.0);
  std::fill(out.second_.begin(), out.second_.end(), 0.0);
  for (const auto& s : states) {
    if (s.steps_ != out.steps_) throw ProtocolError("averaging optimizer states of unequal age");
    axpy_inplace(1.0, s.first_, out.first_);
    axpy_inplace(1.0, s.second_, out.second_);
  }
  const auto k = static_cast<double>(states.size());
  for (double& v : out.first_) v /= k;
  for (double& v : out.second_) v /= k;
  return out;
}

Federation make_federation(const SplitModelConfig& model, const HyperParams& hp,
                           std::shared_ptr<const Dataset> data, const Shards& shards,
                           std::uint64_t root_seed, std::span<const double> initial_theta) {
  model.validate();
  hp.validate();
  require_same_dim(initial_theta.size(), model.total_dim(), "initial parameters");
  require_same_dim(shards.size(), hp.clients, "shard count");
  if (!data) throw ConfigError("federation needs a training dataset");
  for (std::size_t m = 0; m < shards.size(); ++m) {
    if (shards[m].empty()) {
      throw ConfigError("client " + std::to_string(m) +
                        " received no training samples; raise partition.alpha or lower hp.clients");
    }
  }
  Federation fed;
  fed.model = model;
  fed.hp = hp;
  fed.root_seed = root_seed;
  fed.data = std::move(data);
  const auto theta_c = client_part(initial_theta, model);
  const auto theta_s = server_part(initial_theta, model);
  fed.server.theta_s.assign(theta_s.begin(), theta_s.end());
  fed.server.theta_c_global.assign(theta_c.begin(), theta_c.end());
  fed.server.server_optimizer = OptimizerState(hp.optimizer, theta_s.size(), hp.adam);
  fed.server.client_optimizer = OptimizerState(hp.optimizer, theta_c.size(), hp.adam);
  fed.clients.resize(hp.clients);
  for (std::size_t m = 0; m < hp.clients; ++m) {
    ClientState& c = fed.clients[m];
    c.id = m;
    c.theta_c.assign(theta_c.begin(), theta_c.end());
    c.shard = shards[m];
    c.optimizer = OptimizerState(hp.optimizer, theta_c.size(), hp.adam);
  }
  return fed;
}

std::vector<std::size_t> sample_clients(std::size_t clients, std::size_t sampled,
                                        std::uint64_t root_seed, std::uint64_t round) {
  if (sampled > clients) {
    throw ConfigError("sample_clients: K=" + std::to_string(sampled) + " exceeds M=" +
                      std::to_string(clients));
  }
  std::vector<std::size_t> ids(clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  CounterRng rng(derive_stream(root_seed, kSamplingDomain, round));
  // Partial Fisher-Yates: the first K slots are a uniform K-subset.
  for (std::size_t i = 0; i < sampled; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(sampled);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Batch client_batch(const Federation& fed, const ClientState& client, std::uint64_t round) {
  CounterRng rng(derive_stream(fed.root_seed, kBatchDomain, round, client.id));
  std::vector<std::size_t> idx(fed.hp.batch_size);
  for (auto& i : idx) i = client.shard[rng.uniform_index(client.shard.size())];
  return fed.data->gather(idx);
}

void client_sync(ClientState& client, std::span<const RoundRecord> history,
                 std::uint64_t current_round, const HyperParams& hp, TrafficLedger* ledger) {
  if (client.t_sync >= current_round) return;
  if (history.empty()) {
    throw StalenessError("client " + std::to_string(client.id) + " needs rounds from " +
                         std::to_string(client.t_sync) + " but the server history is empty");
  }
  const std::uint64_t first = history.front().round;
  for (std::uint64_t tau = client.t_sync; tau < current_round; ++tau) {
    if (tau < first || tau - first >= history.size() || history[tau - first].round != tau) {
      throw StalenessError("client " + std::to_string(client.id) + " cannot catch up: round " +
                           std::to_string(tau) + " is missing from the server history");
    }
  }
  const std::size_t dc = client.theta_c.size();
  for (std::uint64_t tau = client.t_sync; tau < current_round; ++tau) {
    const RoundRecord& rec = history[tau - first];
    const Vector g = reconstruct_gradient(rec.v_bar, rec.seeds, hp.zo, dc);
    client.optimizer.apply(client.theta_c, g, rec.eta_used);
    if (ledger != nullptr) {
      ledger->record(MessageKind::ScalarDown, rec.v_bar.size() * kBytesPerFloat);
      ledger->record(MessageKind::SeedDown, rec.seeds.size() * kBytesPerSeed);
    }
  }
  client.t_sync = current_round;
}

RoundMetrics run_round_hosfl(Federation& fed, std::span<const std::size_t> sampled) {
  check_sampled(fed, sampled);
  const std::uint64_t t = fed.server.round;
  const HyperParams& hp = fed.hp;
  const SplitModelConfig& model = fed.model;
  const std::size_t P = hp.zo.perturbations;
  for (std::size_t m : sampled) {
    if (fed.clients[m].t_sync != t) {
      throw ProtocolError("client " + std::to_string(m) + " is unsynchronized (t_sync=" +
                          std::to_string(fed.clients[m].t_sync) + ", round=" + std::to_string(t) +
                          "); run client_sync before the round");
    }
  }

  TrafficLedger delta;
  const auto seeds = perturbation_seeds(fed.root_seed, t, P);
  delta.record(MessageKind::SeedDown, P * kBytesPerSeed);

  struct ClientWork {
    Batch batch;
    Matrix z;
    ServerPass pass;
    Vector v;
  };
  std::vector<ClientWork> work(sampled.size());

  // Phase 1: client forward, upload (z, y).
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const ClientState& c = fed.clients[sampled[i]];
    work[i].batch = client_batch(fed, c, t);
    work[i].z = client_forward(c.theta_c, work[i].batch, model);
    record_upload(delta, work[i].z, work[i].batch);
  }

  // Phase 2: server backprop; lambda_m goes back to client m.
  std::vector<Vector> server_grads;
  double loss_sum = 0.0;
  for (auto& w : work) {
    w.pass = server_forward_backward(fed.server.theta_s, w.z, w.batch.labels, model);
    loss_sum += w.pass.loss;
    server_grads.push_back(w.pass.g_s);
    delta.record(MessageKind::GradDown, w.pass.lambda.size() * kBytesPerFloat);
  }
  const Vector g_s = ordered_mean(server_grads);

  // Phase 3: P perturbed forwards per client, P scalars up.
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const ClientState& c = fed.clients[sampled[i]];
    auto& w = work[i];
    w.v = zo_scalars(c.theta_c, w.pass.lambda, w.z, w.batch, seeds, hp.zo, model, t, c.id).values;
    delta.record(MessageKind::ScalarUp, P * kBytesPerFloat);
  }

  // Phase 4: aggregate, broadcast, reconstruct.
  Vector v_bar(P, 0.0);
  for (const auto& w : work) {
    for (std::size_t p = 0; p < P; ++p) v_bar[p] += w.v[p];
  }
  const auto k = static_cast<double>(sampled.size());
  for (double& v : v_bar) v /= k;
  if (!all_finite(v_bar)) throw NumericError("aggregated scalars are non-finite; round aborted");
  delta.record(MessageKind::ScalarDown, P * kBytesPerFloat);
  const Vector g_hat = reconstruct_gradient(v_bar, seeds, hp.zo, model.client_dim());

  fed.server.server_optimizer.apply(fed.server.theta_s, g_s, hp.eta);
  for (std::size_t m : sampled) {
    ClientState& c = fed.clients[m];
    c.optimizer.apply(c.theta_c, g_hat, hp.eta);
    c.t_sync = t + 1;
  }
  fed.server.client_optimizer.apply(fed.server.theta_c_global, g_hat, hp.eta);
  fed.server.history.push_back({t, seeds, v_bar, hp.eta});
  commit(fed, delta);

  RoundMetrics out;
  out.round = t;
  out.train_loss = loss_sum / k;
  out.grad_norm = norm(g_hat);
  out.samples = sampled.size() * hp.batch_size;
  out.sampled.assign(sampled.begin(), sampled.end());
  return out;
}

RoundMetrics run_round_sfl(Federation& fed, std::span<const std::size_t> sampled) {
  check_sampled(fed, sampled);
  const std::uint64_t t = fed.server.round;
  const HyperParams& hp = fed.hp;
  const SplitModelConfig& model = fed.model;
  const std::size_t dc = model.client_dim();
  const Vector& theta_c = fed.server.theta_c_global;

  TrafficLedger delta;
  std::vector<Vector> server_grads;
  std::vector<Vector> client_grads;
  std::vector<Vector> local_models;
  std::vector<OptimizerState> local_states;
  double loss_sum = 0.0;
  for (std::size_t m : sampled) {
    delta.record(MessageKind::ModelDown, dc * kBytesPerFloat);
    const Batch batch = client_batch(fed, fed.clients[m], t);
    const Matrix z = client_forward(theta_c, batch, model);
    record_upload(delta, z, batch);
    ServerPass pass = server_forward_backward(fed.server.theta_s, z, batch.labels, model);
    loss_sum += pass.loss;
    delta.record(MessageKind::GradDown, pass.lambda.size() * kBytesPerFloat);
    server_grads.push_back(std::move(pass.g_s));
    Vector g_c = client_vjp(theta_c, batch.inputs, pass.lambda, model);
    Vector local = theta_c;
    OptimizerState state = fed.server.client_optimizer;
    state.apply(local, g_c, hp.eta);
    client_grads.push_back(std::move(g_c));
    local_models.push_back(std::move(local));
    local_states.push_back(std::move(state));
    delta.record(MessageKind::ModelUp, dc * kBytesPerFloat);
  }
  const Vector g_s = ordered_mean(server_grads);
  Vector averaged = ordered_mean(local_models);
  if (!all_finite(averaged)) throw NumericError("averaged client model is non-finite; round aborted");

  fed.server.server_optimizer.apply(fed.server.theta_s, g_s, hp.eta);
  fed.server.theta_c_global = std::move(averaged);
  fed.server.client_optimizer = OptimizerState::average(local_states);
  for (std::size_t m : sampled) {
    fed.clients[m].theta_c = fed.server.theta_c_global;
    fed.clients[m].optimizer = fed.server.client_optimizer;
    fed.clients[m].t_sync = t + 1;
  }
  commit(fed, delta);

  RoundMetrics out;
  out.round = t;
  out.train_loss = loss_sum / static_cast<double>(sampled.size());
  out.grad_norm = norm(ordered_mean(client_grads));
  out.samples = sampled.size() * hp.batch_size;
  out.sampled.assign(sampled.begin(), sampled.end());
  return out;
}

RoundMetrics run_round_zosfl(Federation& fed, std::span<const std::size_t> sampled) {
  check_sampled(fed, sampled);
  const std::uint64_t t = fed.server.round;
  const HyperParams& hp = fed.hp;
  const SplitModelConfig& model = fed.model;
  const std::size_t dc = model.client_dim();
  const double mu = hp.zo.mu;
  const Vector& theta_c = fed.server.theta_c_global;

  TrafficLedger delta;
  const std::uint64_t seed = derive_seed({fed.root_seed, t, 1});
  delta.record(MessageKind::SeedDown, kBytesPerSeed);
  const Vector u = gaussian_vector(seed, model.total_dim());
  const std::span<const double> u_c(u.data(), dc);
  const std::span<const double> u_s(u.data() + dc, u.size() - dc);
  const Vector theta_s_up = axpy(mu, u_s, fed.server.theta_s);
  const Vector theta_s_down = axpy(-mu, u_s, fed.server.theta_s);
  const Vector theta_c_up = axpy(mu, u_c, theta_c);
  const Vector theta_c_down = axpy(-mu, u_c, theta_c);

  double loss_sum = 0.0;
  double coeff_sum = 0.0;
  std::vector<Vector> client_grads;
  std::vector<Vector> local_models;
  std::vector<OptimizerState> local_states;
  for (std::size_t m : sampled) {
    delta.record(MessageKind::ModelDown, dc * kBytesPerFloat);
    const Batch batch = client_batch(fed, fed.clients[m], t);
    const Matrix z_up = client_forward(theta_c_up, batch, model);
    const Matrix z_down = client_forward(theta_c_down, batch, model);
    record_upload(delta, z_up, batch);
    delta.record(MessageKind::ActivationUp, z_down.size() * kBytesPerFloat);
    const double loss_up = server_loss(theta_s_up, z_up, batch.labels, model);
    const double loss_down = server_loss(theta_s_down, z_down, batch.labels, model);
    const double coeff = (loss_up - loss_down) / (2.0 * mu);
    if (!std::isfinite(coeff)) throw NumericError("non-finite SPSA difference; round aborted");
    delta.record(MessageKind::ScalarDown, kBytesPerFloat);
    loss_sum += 0.5 * (loss_up + loss_down);
    coeff_sum += coeff;
    Vector g_c(u_c.begin(), u_c.end());
    scale_inplace(coeff, g_c);
    Vector local = theta_c;
    OptimizerState state = fed.server.client_optimizer;
    state.apply(local, g_c, hp.eta);
    client_grads.push_back(std::move(g_c));
    local_models.push_back(std::move(local));
    local_states.push_back(std::move(state));
    delta.record(MessageKind::ModelUp, dc * kBytesPerFloat);
  }
  const auto k = static_cast<double>(sampled.size());
  Vector g_s(u_s.begin(), u_s.end());
  scale_inplace(coeff_sum / k, g_s);
  Vector averaged = ordered_mean(local_models);

  fed.server.server_optimizer.apply(fed.server.theta_s, g_s, hp.eta);
  fed.server.theta_c_global = std::move(averaged);
  fed.server.client_optimizer = OptimizerState::average(local_states);
  for (std::size_t m : sampled) {
    fed.clients[m].theta_c = fed.server.theta_c_global;
    fed.clients[m].optimizer = fed.server.client_optimizer;
    fed.clients[m].t_sync = t + 1;
  }
  commit(fed, delta);

  RoundMetrics out;
  out.round = t;
  out.train_loss = loss_sum / k;
  out.grad_norm = norm(ordered_mean(client_grads));
  out.samples = sampled.size() * hp.batch_size;
  out.sampled.assign(sampled.begin(), sampled.end());
  return out;
}

RoundMetrics step(Federation& fed, Protocol protocol) {
  const std::uint64_t t = fed.server.round;
  const auto sampled = sample_clients(fed.hp.clients, fed.hp.sampled, fed.root_seed, t);
  switch (protocol) {
    case Protocol::hosfl:
      for (std::size_t m : sampled) {
        client_sync(fed.clients[m], fed.server.history, t, fed.hp, &fed.ledger);
      }
      return run_round_hosfl(fed, sampled);
    case Protocol::sfl:
      return run_round_sfl(fed, sampled);
    case Protocol::zosfl:
      return run_round_zosfl(fed, sampled);
  }
  throw ProtocolError("unknown protocol");
}

Vector global_parameters(const Federation& fed) {
  Vector theta = fed.server.theta_c_global;
  theta.insert(theta.end(), fed.server.theta_s.begin(), fed.server.theta_s.end());
  return theta;
}

TrafficShape traffic_shape(const HyperParams& hp, const SplitModelConfig& model) {
  TrafficShape s;
  s.sampled_clients = hp.sampled;
  s.batch_size = hp.batch_size;
  s.cut_width = model.cut_width();
  s.client_dim = model.client_dim();
  s.perturbations = hp.zo.perturbations;
  s.label_bytes_per_sample = model.loss == LossKind::softmax_cross_entropy
                                 ? kBytesPerClassLabel
                                 : model.output_dim() * kBytesPerFloat;
  return s;
}

ByteCounts closed_form_traffic(const HyperParams& hp, const SplitModelConfig& model,
                               Protocol protocol) {
  return closed_form_traffic(traffic_shape(hp, model), protocol);
}

TrainingResult run_training(const TrainingSetup& setup) {
  const HyperParams& hp = setup.hp;
  const Vector theta0 = init_parameters(
      setup.model, derive_stream(setup.root_seed, kInitDomain, 0), setup.init_scale);
  Federation fed =
      make_federation(setup.model, hp, setup.train, setup.shards, setup.root_seed, theta0);

  std::optional<Batch> eval_batch;
  if (setup.eval) eval_batch = setup.eval->all();

  const std::uint64_t per_round = static_cast<std::uint64_t>(hp.sampled) * hp.batch_size;
  std::uint64_t cap = hp.rounds;
  if (cap == 0 && setup.sample_budget > 0) cap = std::numeric_limits<std::uint64_t>::max();

  TrainingResult result;
  std::uint64_t processed = 0;
  for (std::uint64_t t = 0; t < cap; ++t) {
    if (setup.sample_budget > 0 && processed + per_round > setup.sample_budget) break;
    const RoundMetrics rm = step(fed, setup.protocol);
    processed += rm.samples;
    MetricsRecord rec;
    rec.round = rm.round;
    rec.train_loss = rm.train_loss;
    rec.grad_norm = rm.grad_norm;
    rec.samples_processed = processed;
    rec.bytes = fed.ledger.totals();
    if (eval_batch) {
      const Evaluation ev = evaluate(global_parameters(fed), *eval_batch, setup.model);
      rec.eval_loss = ev.loss;
      rec.eval_accuracy = ev.accuracy;
    }
    result.log.push_back(rec);
  }
  result.theta_c = fed.server.theta_c_global;
  result.theta_s = fed.server.theta_s;
  result.ledger = fed.ledger;
  return result;
}

}  // namespace hosfl
