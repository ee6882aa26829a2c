#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hosfl/numeric.hpp"

namespace hosfl {

enum class Activation { identity, tanh, relu };
enum class LossKind { squared_error, softmax_cross_entropy };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind l);
Activation parse_activation(std::string_view s);
LossKind parse_loss(std::string_view s);

/// A fully connected stack `layer_dims[0] -> ... -> layer_dims.back()` cut
/// after `cut_index` layers. Layers [0, cut) live on the client.
///
/// Every layer except the last is followed by `activation`; the last layer
/// emits raw predictions (or logits). Parameters are packed layer by layer as
/// W (out x in, row-major) followed by b (out) when `bias` is set.
struct SplitModelConfig {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::tanh;
  std::size_t cut_index = 1;
  LossKind loss = LossKind::squared_error;
  bool bias = true;

  std::size_t num_layers() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  /// D, the width of the activation handed to the server.
  std::size_t cut_width() const { return layer_dims[cut_index]; }

  std::size_t layer_param_count(std::size_t layer) const;
  std::size_t client_dim() const;  // d_c
  std::size_t server_dim() const;  // d_s
  std::size_t total_dim() const { return client_dim() + server_dim(); }

  /// Throws ConfigError unless 0 < cut_index < num_layers and all widths > 0.
  void validate() const;

  friend bool operator==(const SplitModelConfig&, const SplitModelConfig&) = default;
};

/// Targets for one batch: `targets` (B x out) for squared error, `classes`
/// (length B) for softmax cross-entropy. The unused member stays empty.
struct Labels {
  Matrix targets;
  std::vector<int> classes;

  std::size_t size() const { return classes.empty() ? targets.rows : classes.size(); }
};

struct Batch {
  Matrix inputs;  // B x n_in
  Labels labels;

  std::size_t size() const { return inputs.rows; }
};

/// Result of one server pass. `lambda` is dLoss/dz for the batch-mean loss,
/// so each row carries a 1/B factor.
struct ServerPass {
  double loss = 0.0;
  Vector g_s;
  Matrix lambda;
};

Matrix client_forward(std::span<const double> theta_c, const Matrix& inputs,
                      const SplitModelConfig& cfg);
inline Matrix client_forward(std::span<const double> theta_c, const Batch& batch,
                             const SplitModelConfig& cfg) {
  return client_forward(theta_c, batch.inputs, cfg);
}

/// Server forward plus one backward pass producing both g_s and lambda.
ServerPass server_forward_backward(std::span<const double> theta_s, const Matrix& z,
                                   const Labels& labels, const SplitModelConfig& cfg);

/// Server forward only: predictions (B x out).
Matrix server_forward(std::span<const double> theta_s, const Matrix& z,
                      const SplitModelConfig& cfg);
double server_loss(std::span<const double> theta_s, const Matrix& z, const Labels& labels,
                   const SplitModelConfig& cfg);

/// Batch-mean loss of the composed model; theta = [theta_c; theta_s].
double full_loss(std::span<const double> theta, const Batch& batch, const SplitModelConfig& cfg);

/// J^T lambda: backpropagates an activation cotangent through the client layers.
Vector client_vjp(std::span<const double> theta_c, const Matrix& inputs, const Matrix& lambda,
                  const SplitModelConfig& cfg);

/// Exact g_c by full backpropagation. Diagnostics and baselines only; the
/// hybrid-order client path never calls this.
Vector analytic_client_gradient(std::span<const double> theta, const Batch& batch,
                                const SplitModelConfig& cfg);

/// [g_c; g_s] of the batch-mean loss.
Vector full_gradient(std::span<const double> theta, const Batch& batch,
                     const SplitModelConfig& cfg);

/// Loss and (for classification) accuracy of the composed model.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(std::span<const double> theta, const Batch& batch,
                    const SplitModelConfig& cfg);

/// Weights ~ N(0, scale^2 / fan_in), biases zero.
Vector init_parameters(const SplitModelConfig& cfg, std::uint64_t seed, double scale = 1.0);

inline std::span<const double> client_part(std::span<const double> theta,
                                           const SplitModelConfig& cfg) {
  return theta.first(cfg.client_dim());
}
inline std::span<const double> server_part(std::span<const double> theta,
                                           const SplitModelConfig& cfg) {
  return theta.subspan(cfg.client_dim());
}

}  // namespace hosfl
