#include "hosfl/config.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>
#include <type_traits>

#include "hosfl/error.hpp"
#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

namespace hosfl {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&key](const char* a) { return key == a; });
    if (!ok) {
      throw ConfigError((where.empty() ? key : where + "." + key) + ": unknown key");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(field + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned()) {
        throw ConfigError(field + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(field + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(field + ": expected a string");
    } else {
      if (!it->is_array()) throw ConfigError(field + ": expected an array");
      for (const auto& e : *it) {
        if (!e.is_number_unsigned()) {
          throw ConfigError(field + ": expected non-negative integers");
        }
      }
    }
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

template <typename Enum, typename Parse>
void read_enum(const json& obj, const char* key, const std::string& where, Enum& out,
               Parse parse) {
  std::string s;
  auto it = obj.find(key);
  if (it == obj.end()) return;
  read(obj, key, where, s);
  try {
    out = parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError((where.empty() ? std::string(key) : where + "." + key) + ": " + e.what());
  }
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  hp.validate();
  if (data.task == TaskKind::classification_blobs) {
    if (model.loss != LossKind::softmax_cross_entropy) {
      throw ConfigError("model.loss: classification_blobs needs softmax_cross_entropy");
    }
    if (model.output_dim() < 2) throw ConfigError("model.layer_dims: need >= 2 output classes");
    if (data.train_samples < model.output_dim()) {
      throw ConfigError("data.train_samples: need at least one sample per class");
    }
  } else if (model.loss != LossKind::squared_error) {
    throw ConfigError("model.loss: regression_quadratic needs squared_error");
  }
  if (data.train_samples < hp.clients) {
    throw ConfigError("data.train_samples: fewer samples than clients");
  }
  if (partition.mode == PartitionMode::dirichlet && !(partition.alpha > 0.0)) {
    throw ConfigError("partition.alpha: must be > 0");
  }
  if (!(init_scale > 0.0)) throw ConfigError("init_scale: must be > 0");
  if (diagnose_trials < 1) throw ConfigError("diagnose_trials: must be >= 1");
}

ExperimentConfig parse_config(std::string_view text) {
  const json doc = parse_json(text);
  reject_unknown(doc, "",
                 {"protocol", "model", "hp", "data", "partition", "sample_budget", "root_seed",
                  "init_scale", "diagnose_trials", "output"});
  ExperimentConfig cfg;
  if (!doc.contains("protocol")) throw ConfigError("protocol: required field is missing");
  read_enum(doc, "protocol", "", cfg.protocol, parse_protocol);

  if (!doc.contains("model")) throw ConfigError("model: required field is missing");
  const json& m = doc["model"];
  reject_unknown(m, "model", {"layer_dims", "activation", "cut_index", "loss", "bias"});
  if (!m.contains("layer_dims")) throw ConfigError("model.layer_dims: required field is missing");
  read(m, "layer_dims", "model", cfg.model.layer_dims);
  read_enum(m, "activation", "model", cfg.model.activation, parse_activation);
  read(m, "cut_index", "model", cfg.model.cut_index);
  read_enum(m, "loss", "model", cfg.model.loss, parse_loss);
  read(m, "bias", "model", cfg.model.bias);

  if (doc.contains("hp")) {
    const json& h = doc["hp"];
    reject_unknown(h, "hp",
                   {"eta", "rounds", "clients", "sampled", "batch_size", "perturbations", "mu",
                    "optimizer", "adam_beta1", "adam_beta2", "adam_epsilon"});
    read(h, "eta", "hp", cfg.hp.eta);
    read(h, "rounds", "hp", cfg.hp.rounds);
    read(h, "clients", "hp", cfg.hp.clients);
    read(h, "sampled", "hp", cfg.hp.sampled);
    read(h, "batch_size", "hp", cfg.hp.batch_size);
    read(h, "perturbations", "hp", cfg.hp.zo.perturbations);
    read(h, "mu", "hp", cfg.hp.zo.mu);
    read_enum(h, "optimizer", "hp", cfg.hp.optimizer, parse_optimizer);
    read(h, "adam_beta1", "hp", cfg.hp.adam.beta1);
    read(h, "adam_beta2", "hp", cfg.hp.adam.beta2);
    read(h, "adam_epsilon", "hp", cfg.hp.adam.epsilon);
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown(d, "data", {"task", "train_samples", "eval_samples", "separation", "noise"});
    read_enum(d, "task", "data", cfg.data.task, parse_task);
    read(d, "train_samples", "data", cfg.data.train_samples);
    read(d, "eval_samples", "data", cfg.data.eval_samples);
    read(d, "separation", "data", cfg.data.separation);
    read(d, "noise", "data", cfg.data.noise);
  }
  if (doc.contains("partition")) {
    const json& p = doc["partition"];
    reject_unknown(p, "partition", {"mode", "alpha"});
    read_enum(p, "mode", "partition", cfg.partition.mode, parse_partition_mode);
    read(p, "alpha", "partition", cfg.partition.alpha);
  }
  read(doc, "sample_budget", "", cfg.sample_budget);
  read(doc, "root_seed", "", cfg.root_seed);
  read(doc, "init_scale", "", cfg.init_scale);
  read(doc, "diagnose_trials", "", cfg.diagnose_trials);
  if (doc.contains("output")) {
    const json& o = doc["output"];
    reject_unknown(o, "output", {"dir", "metrics", "traffic", "checksum"});
    read(o, "dir", "output", cfg.output.dir);
    read(o, "metrics", "output", cfg.output.metrics);
    read(o, "traffic", "output", cfg.output.traffic);
    read(o, "checksum", "output", cfg.output.checksum);
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json doc;
  doc["protocol"] = std::string(to_string(cfg.protocol));
  doc["model"] = {{"layer_dims", cfg.model.layer_dims},
                  {"activation", std::string(to_string(cfg.model.activation))},
                  {"cut_index", cfg.model.cut_index},
                  {"loss", std::string(to_string(cfg.model.loss))},
                  {"bias", cfg.model.bias}};
  doc["hp"] = {{"eta", cfg.hp.eta},
               {"rounds", cfg.hp.rounds},
               {"clients", cfg.hp.clients},
               {"sampled", cfg.hp.sampled},
               {"batch_size", cfg.hp.batch_size},
               {"perturbations", cfg.hp.zo.perturbations},
               {"mu", cfg.hp.zo.mu},
               {"optimizer", std::string(to_string(cfg.hp.optimizer))},
               {"adam_beta1", cfg.hp.adam.beta1},
               {"adam_beta2", cfg.hp.adam.beta2},
               {"adam_epsilon", cfg.hp.adam.epsilon}};
  doc["data"] = {{"task", std::string(to_string(cfg.data.task))},
                 {"train_samples", cfg.data.train_samples},
                 {"eval_samples", cfg.data.eval_samples},
                 {"separation", cfg.data.separation},
                 {"noise", cfg.data.noise}};
  doc["partition"] = {{"mode", std::string(to_string(cfg.partition.mode))},
                      {"alpha", cfg.partition.alpha}};
  doc["sample_budget"] = cfg.sample_budget;
  doc["root_seed"] = cfg.root_seed;
  doc["init_scale"] = cfg.init_scale;
  doc["diagnose_trials"] = cfg.diagnose_trials;
  doc["output"] = {{"dir", cfg.output.dir},
                   {"metrics", cfg.output.metrics},
                   {"traffic", cfg.output.traffic},
                   {"checksum", cfg.output.checksum}};
  return doc.dump(2) + "\n";
}

LatencyConfig parse_latency_config(std::string_view text) {
  const json doc = parse_json(text);
  reject_unknown(doc, "", {"network", "device", "workload", "min_client_layers",
                           "max_client_layers", "noise", "noise_fraction", "noise_trials",
                           "noise_seed"});
  LatencyConfig cfg;
  if (doc.contains("network")) {
    const json& n = doc["network"];
    reject_unknown(n, "network", {"uplink_bps", "downlink_bps", "rtt_seconds"});
    read(n, "uplink_bps", "network", cfg.network.uplink_bps);
    read(n, "downlink_bps", "network", cfg.network.downlink_bps);
    read(n, "rtt_seconds", "network", cfg.network.rtt_seconds);
  }
  if (doc.contains("device")) {
    const json& d = doc["device"];
    reject_unknown(d, "device", {"client_flops_per_s", "server_flops_per_s"});
    read(d, "client_flops_per_s", "device", cfg.device.client_flops_per_s);
    read(d, "server_flops_per_s", "device", cfg.device.server_flops_per_s);
  }
  if (doc.contains("workload")) {
    const json& w = doc["workload"];
    reject_unknown(w, "workload", {"batch", "seq_len", "hidden", "total_layers", "client_layers",
                                   "bytes_per_element", "kv_dim", "ffn_dim", "gated_ffn"});
    read(w, "batch", "workload", cfg.workload.batch);
    read(w, "seq_len", "workload", cfg.workload.seq_len);
    read(w, "hidden", "workload", cfg.workload.hidden);
    read(w, "total_layers", "workload", cfg.workload.total_layers);
    read(w, "client_layers", "workload", cfg.workload.client_layers);
    read(w, "bytes_per_element", "workload", cfg.workload.bytes_per_element);
    read(w, "kv_dim", "workload", cfg.workload.kv_dim);
    read(w, "ffn_dim", "workload", cfg.workload.ffn_dim);
    read(w, "gated_ffn", "workload", cfg.workload.gated_ffn);
  }
  read(doc, "min_client_layers", "", cfg.min_client_layers);
  read(doc, "max_client_layers", "", cfg.max_client_layers);
  read(doc, "noise", "", cfg.noise);
  read(doc, "noise_fraction", "", cfg.noise_model.fraction);
  read(doc, "noise_trials", "", cfg.noise_model.trials);
  read(doc, "noise_seed", "", cfg.noise_model.seed);
  validate_profiles(cfg.network, cfg.device, cfg.workload);
  if (cfg.min_client_layers < 1 || cfg.min_client_layers > cfg.max_client_layers ||
      cfg.max_client_layers >= cfg.workload.total_layers) {
    throw ConfigError("min_client_layers/max_client_layers: need 1 <= min <= max < total_layers");
  }
  return cfg;
}

}  // namespace hosfl
