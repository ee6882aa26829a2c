#include "hosfl/runner.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <ostream>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"
#include "hosfl/zo_estimator.hpp"
#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

namespace hosfl {
namespace {

using nlohmann::json;

constexpr std::uint64_t kDataDomain = 0x64617461;       // "data"
constexpr std::uint64_t kPartitionDomain = 0x70617274;  // "part"

json bytes_json(const ByteCounts& bytes) {
  json b = json::object();
  for (MessageKind k : kAllMessageKinds) {
    b[std::string(to_string(k))] = bytes[static_cast<std::size_t>(k)];
  }
  return b;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << contents;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace

TrainingSetup build_training_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainingSetup s;
  s.protocol = cfg.protocol;
  s.model = cfg.model;
  s.hp = cfg.hp;
  s.root_seed = cfg.root_seed;
  s.sample_budget = cfg.sample_budget;
  s.init_scale = cfg.init_scale;

  const std::size_t total = cfg.data.train_samples + cfg.data.eval_samples;
  const std::uint64_t data_seed = derive_stream(cfg.root_seed, kDataDomain, 0);
  Dataset full = cfg.data.task == TaskKind::classification_blobs
                     ? make_classification_blobs(total, cfg.model.input_dim(),
                                                 cfg.model.output_dim(), cfg.data.separation,
                                                 data_seed)
                     : make_regression_quadratic(total, cfg.model.input_dim(),
                                                 cfg.model.output_dim(), cfg.data.noise, data_seed);
  std::vector<std::size_t> train_idx(cfg.data.train_samples);
  std::vector<std::size_t> eval_idx(cfg.data.eval_samples);
  for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;
  for (std::size_t i = 0; i < eval_idx.size(); ++i) eval_idx[i] = train_idx.size() + i;

  auto subset = [&full](std::span<const std::size_t> idx) {
    Dataset d;
    d.task = full.task;
    d.num_classes = full.num_classes;
    d.seed = full.seed;
    Batch b = full.gather(idx);
    d.inputs = std::move(b.inputs);
    d.classes = std::move(b.labels.classes);
    d.targets = std::move(b.labels.targets);
    return d;
  };
  auto train = std::make_shared<Dataset>(subset(train_idx));
  if (!eval_idx.empty()) s.eval = std::make_shared<Dataset>(subset(eval_idx));

  PartitionSpec part = cfg.partition;
  part.clients = cfg.hp.clients;
  part.seed = derive_stream(cfg.root_seed, kPartitionDomain, 0);
  s.shards = partition(*train, part);
  s.train = std::move(train);
  return s;
}

std::string parameters_checksum(std::span<const double> theta_c, std::span<const double> theta_s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto absorb = [&h](std::span<const double> values) {
    for (double v : values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  };
  absorb(theta_c);
  absorb(theta_s);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string metrics_header_line(const ExperimentConfig& cfg) {
  json h = {{"schema", "hosfl.metrics"},
            {"version", 1},
            {"protocol", std::string(to_string(cfg.protocol))},
            {"root_seed", cfg.root_seed},
            {"client_dim", cfg.model.client_dim()},
            {"server_dim", cfg.model.server_dim()},
            {"perturbations", cfg.hp.zo.perturbations},
            {"sampled", cfg.hp.sampled},
            {"batch_size", cfg.hp.batch_size}};
  return h.dump() + "\n";
}

std::string metrics_record_line(const MetricsRecord& rec) {
  json r = {{"round", rec.round},
            {"train_loss", rec.train_loss},
            {"eval_loss", rec.eval_loss},
            {"eval_accuracy", rec.eval_accuracy},
            {"grad_norm", rec.grad_norm},
            {"samples", rec.samples_processed},
            {"bytes", bytes_json(rec.bytes)}};
  return r.dump() + "\n";
}

RunOutputs run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const TrainingSetup setup = build_training_setup(cfg);
  RunOutputs out;
  out.result = run_training(setup);

  std::filesystem::create_directories(out_dir);
  out.metrics_path = out_dir / cfg.output.metrics;
  out.traffic_path = out_dir / cfg.output.traffic;
  out.checksum_path = out_dir / cfg.output.checksum;

  std::string metrics = metrics_header_line(cfg);
  for (const auto& rec : out.result.log) metrics += metrics_record_line(rec);
  write_file(out.metrics_path, metrics);
  write_file(out.traffic_path, breakdown_csv(breakdown_report(out.result.ledger)));
  out.checksum = parameters_checksum(out.result.theta_c, out.result.theta_s);
  write_file(out.checksum_path, out.checksum + "\n");
  return out;
}

std::string diagnose_estimator_report(const ExperimentConfig& cfg) {
  const TrainingSetup setup = build_training_setup(cfg);
  const Vector theta =
      init_parameters(cfg.model, derive_stream(cfg.root_seed, 0x696e6974, 0), cfg.init_scale);
  const Federation fed =
      make_federation(cfg.model, cfg.hp, setup.train, setup.shards, cfg.root_seed, theta);
  const Batch batch = client_batch(fed, fed.clients.front(), 0);

  const GammaEstimate gamma = measure_gamma(theta, batch, cfg.model);
  const TheoryBounds bounds =
      theory_bounds(cfg.model.client_dim(), cfg.hp.zo.perturbations, cfg.hp.zo.mu, gamma.gamma);
  const EstimatorDiagnostics diag =
      estimator_diagnostics(cfg.model, theta, batch, cfg.hp.zo, cfg.diagnose_trials, cfg.root_seed);

  json report = {
      {"client_dim", cfg.model.client_dim()},
      {"perturbations", cfg.hp.zo.perturbations},
      {"mu", cfg.hp.zo.mu},
      {"trials", diag.trials},
      {"gamma",
       {{"lambda_norm", gamma.lambda_norm},
        {"jacobian_op_norm", gamma.jacobian_op_norm},
        {"hessian_op_norm", gamma.hessian_op_norm},
        {"gamma", gamma.gamma}}},
      {"bounds",
       {{"c1", bounds.c1},
        {"sigma_zo_sq", bounds.sigma_zo_sq},
        {"bias_bound_sq", bounds.bias_bound_sq}}},
      {"empirical",
       {{"true_g_c_norm_sq", diag.true_g_c_norm_sq},
        {"empirical_bias_sq", diag.empirical_bias_sq},
        {"plain_bias_sq", diag.plain_bias_sq},
        {"empirical_second_moment", diag.empirical_second_moment},
        {"empirical_variance", diag.empirical_variance}}},
      {"checks",
       {{"bias_within_bound", diag.empirical_bias_sq <= bounds.bias_bound_sq},
        {"second_moment_within_bound",
         diag.empirical_second_moment <=
             bounds.c1 * diag.true_g_c_norm_sq + bounds.sigma_zo_sq}}}};
  return report.dump(2) + "\n";
}

void write_traffic_report(std::ostream& out, const ExperimentConfig& cfg) {
  out << "protocol,kind,direction,bytes_per_round\n";
  for (Protocol p : {Protocol::hosfl, Protocol::sfl, Protocol::zosfl}) {
    const ByteCounts c = closed_form_traffic(cfg.hp, cfg.model, p);
    for (MessageKind k : kAllMessageKinds) {
      out << to_string(p) << ',' << to_string(k) << ',' << to_string(direction_of(k)) << ','
          << c[static_cast<std::size_t>(k)] << '\n';
    }
  }
}

void write_latency_sweep(std::ostream& out, const LatencyConfig& cfg) {
  const auto rows = latency_sweep(cfg.network, cfg.device, cfg.workload, cfg.min_client_layers,
                                  cfg.max_client_layers, cfg.noise ? &cfg.noise_model : nullptr);
  write_latency_sweep_csv(out, rows, cfg.noise);
}

}  // namespace hosfl
