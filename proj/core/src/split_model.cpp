#include "hosfl/split_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"

namespace hosfl {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

std::string_view to_string(LossKind l) {
  switch (l) {
    case LossKind::squared_error: return "squared_error";
    case LossKind::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

LossKind parse_loss(std::string_view s) {
  if (s == "squared_error") return LossKind::squared_error;
  if (s == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

std::size_t SplitModelConfig::layer_param_count(std::size_t layer) const {
  const std::size_t in = layer_dims[layer];
  const std::size_t out = layer_dims[layer + 1];
  return in * out + (bias ? out : 0);
}

std::size_t SplitModelConfig::client_dim() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < cut_index; ++l) n += layer_param_count(l);
  return n;
}

std::size_t SplitModelConfig::server_dim() const {
  std::size_t n = 0;
  for (std::size_t l = cut_index; l < num_layers(); ++l) n += layer_param_count(l);
  return n;
}

void SplitModelConfig::validate() const {
  if (layer_dims.size() < 3) {
    throw ConfigError("model.layer_dims: need at least two layers (three widths)");
  }
  for (std::size_t w : layer_dims) {
    if (w == 0) throw ConfigError("model.layer_dims: widths must be positive");
  }
  if (cut_index == 0 || cut_index >= num_layers()) {
    throw ConfigError("model.cut_index: must satisfy 0 < cut_index < " +
                      std::to_string(num_layers()));
  }
}

namespace {

struct Trace {
  std::vector<Matrix> inputs;   // input to each layer of the range
  std::vector<Matrix> outputs;  // post-activation output of each layer
};

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

// Derivative expressed through the activation output y = act(x).
// ReLU uses the subgradient 0 at the kink.
double activate_grad(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

std::size_t range_param_count(const SplitModelConfig& cfg, std::size_t first, std::size_t last) {
  std::size_t n = 0;
  for (std::size_t l = first; l < last; ++l) n += cfg.layer_param_count(l);
  return n;
}

Matrix forward_range(std::span<const double> params, const SplitModelConfig& cfg,
                     std::size_t first, std::size_t last, const Matrix& input, Trace* trace) {
  require_same_dim(params.size(), range_param_count(cfg, first, last), "parameter vector");
  require_same_dim(input.cols, cfg.layer_dims[first], "layer input width");
  Matrix x = input;
  std::size_t offset = 0;
  const std::size_t final_layer = cfg.num_layers() - 1;
  for (std::size_t l = first; l < last; ++l) {
    const std::size_t in = cfg.layer_dims[l];
    const std::size_t out = cfg.layer_dims[l + 1];
    const double* w = params.data() + offset;
    const double* b = cfg.bias ? w + in * out : nullptr;
    Matrix y(x.rows, out);
    const bool hidden = l != final_layer;
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* xr = x.data.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w + o * in;
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
        if (b != nullptr) acc += b[o];
        y(r, o) = hidden ? activate(cfg.activation, acc) : acc;
      }
    }
    if (!all_finite(y.data)) {
      throw NumericError("non-finite output at layer " + std::to_string(l) + " (" +
                         (l < cfg.cut_index ? "client" : "server") + " side)");
    }
    if (trace != nullptr) {
      trace->inputs.push_back(std::move(x));
      trace->outputs.push_back(y);
    }
    x = std::move(y);
    offset += cfg.layer_param_count(l);
  }
  return x;
}

struct Backward {
  Vector param_grad;
  Matrix input_grad;
};

Backward backward_range(std::span<const double> params, const SplitModelConfig& cfg,
                        std::size_t first, std::size_t last, const Trace& trace,
                        Matrix grad_out, bool want_input_grad) {
  Backward res;
  res.param_grad.assign(params.size(), 0.0);
  const std::size_t final_layer = cfg.num_layers() - 1;
  std::size_t offset = params.size();
  for (std::size_t l = last; l-- > first;) {
    const std::size_t k = l - first;
    const std::size_t in = cfg.layer_dims[l];
    const std::size_t out = cfg.layer_dims[l + 1];
    offset -= cfg.layer_param_count(l);
    const Matrix& x = trace.inputs[k];
    const Matrix& y = trace.outputs[k];
    Matrix delta = std::move(grad_out);
    if (l != final_layer) {
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        delta.data[i] *= activate_grad(cfg.activation, y.data[i]);
      }
    }
    double* dw = res.param_grad.data() + offset;
    double* db = cfg.bias ? dw + in * out : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) acc += delta(r, o) * x(r, i);
        dw[o * in + i] = acc;
      }
      if (db != nullptr) {
        double acc = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) acc += delta(r, o);
        db[o] = acc;
      }
    }
    if (l == first && !want_input_grad) break;
    const double* w = params.data() + offset;
    Matrix gx(x.rows, in);
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += w[o * in + i] * delta(r, o);
        gx(r, i) = acc;
      }
    }
    grad_out = std::move(gx);
  }
  if (want_input_grad) res.input_grad = std::move(grad_out);
  return res;
}

void check_labels(const Labels& labels, std::size_t rows, const SplitModelConfig& cfg) {
  if (cfg.loss == LossKind::squared_error) {
    if (labels.targets.rows != rows || labels.targets.cols != cfg.output_dim()) {
      throw DimensionError("squared_error targets must be " + std::to_string(rows) + "x" +
                           std::to_string(cfg.output_dim()));
    }
  } else {
    require_same_dim(labels.classes.size(), rows, "class labels");
    for (int c : labels.classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= cfg.output_dim()) {
        throw DimensionError("class label " + std::to_string(c) + " out of range");
      }
    }
  }
}

// Batch-mean loss; optionally fills dLoss/dPrediction.
double loss_and_grad(const Matrix& pred, const Labels& labels, const SplitModelConfig& cfg,
                     Matrix* grad) {
  check_labels(labels, pred.rows, cfg);
  const double inv_b = 1.0 / static_cast<double>(pred.rows);
  if (grad != nullptr) *grad = Matrix(pred.rows, pred.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < pred.rows; ++r) {
    if (cfg.loss == LossKind::squared_error) {
      double row = 0.0;
      for (std::size_t j = 0; j < pred.cols; ++j) {
        const double diff = pred(r, j) - labels.targets(r, j);
        row += diff * diff;
        if (grad != nullptr) (*grad)(r, j) = 2.0 * diff * inv_b;
      }
      total += row;
    } else {
      const auto logits = pred.row(r);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (double v : logits) sum += std::exp(v - mx);
      const double lse = mx + std::log(sum);
      const auto y = static_cast<std::size_t>(labels.classes[r]);
      total += lse - logits[y];
      if (grad != nullptr) {
        for (std::size_t j = 0; j < pred.cols; ++j) {
          const double p = std::exp(logits[j] - lse);
          (*grad)(r, j) = (p - (j == y ? 1.0 : 0.0)) * inv_b;
        }
      }
    }
  }
  const double loss = total * inv_b;
  if (!std::isfinite(loss)) throw NumericError("non-finite loss at output layer");
  return loss;
}

}  // namespace

Matrix client_forward(std::span<const double> theta_c, const Matrix& inputs,
                      const SplitModelConfig& cfg) {
  return forward_range(theta_c, cfg, 0, cfg.cut_index, inputs, nullptr);
}

Matrix server_forward(std::span<const double> theta_s, const Matrix& z,
                      const SplitModelConfig& cfg) {
  return forward_range(theta_s, cfg, cfg.cut_index, cfg.num_layers(), z, nullptr);
}

double server_loss(std::span<const double> theta_s, const Matrix& z, const Labels& labels,
                   const SplitModelConfig& cfg) {
  return loss_and_grad(server_forward(theta_s, z, cfg), labels, cfg, nullptr);
}

ServerPass server_forward_backward(std::span<const double> theta_s, const Matrix& z,
                                   const Labels& labels, const SplitModelConfig& cfg) {
  require_finite(z.data, "uploaded activation");
  Trace trace;
  const Matrix pred = forward_range(theta_s, cfg, cfg.cut_index, cfg.num_layers(), z, &trace);
  Matrix grad;
  ServerPass out;
  out.loss = loss_and_grad(pred, labels, cfg, &grad);
  auto bw = backward_range(theta_s, cfg, cfg.cut_index, cfg.num_layers(), trace, std::move(grad),
                           true);
  out.g_s = std::move(bw.param_grad);
  out.lambda = std::move(bw.input_grad);
  return out;
}

double full_loss(std::span<const double> theta, const Batch& batch, const SplitModelConfig& cfg) {
  require_same_dim(theta.size(), cfg.total_dim(), "full parameter vector");
  const Matrix z = client_forward(client_part(theta, cfg), batch.inputs, cfg);
  return server_loss(server_part(theta, cfg), z, batch.labels, cfg);
}

Vector client_vjp(std::span<const double> theta_c, const Matrix& inputs, const Matrix& lambda,
                  const SplitModelConfig& cfg) {
  Trace trace;
  const Matrix z = forward_range(theta_c, cfg, 0, cfg.cut_index, inputs, &trace);
  if (lambda.rows != z.rows || lambda.cols != z.cols) {
    throw DimensionError("client_vjp: lambda shape does not match the activation");
  }
  return backward_range(theta_c, cfg, 0, cfg.cut_index, trace, lambda, false).param_grad;
}

Vector analytic_client_gradient(std::span<const double> theta, const Batch& batch,
                                const SplitModelConfig& cfg) {
  require_same_dim(theta.size(), cfg.total_dim(), "full parameter vector");
  const auto theta_c = client_part(theta, cfg);
  const Matrix z = client_forward(theta_c, batch.inputs, cfg);
  const ServerPass pass = server_forward_backward(server_part(theta, cfg), z, batch.labels, cfg);
  return client_vjp(theta_c, batch.inputs, pass.lambda, cfg);
}

Vector full_gradient(std::span<const double> theta, const Batch& batch,
                     const SplitModelConfig& cfg) {
  require_same_dim(theta.size(), cfg.total_dim(), "full parameter vector");
  const auto theta_c = client_part(theta, cfg);
  const Matrix z = client_forward(theta_c, batch.inputs, cfg);
  const ServerPass pass = server_forward_backward(server_part(theta, cfg), z, batch.labels, cfg);
  Vector g = client_vjp(theta_c, batch.inputs, pass.lambda, cfg);
  g.insert(g.end(), pass.g_s.begin(), pass.g_s.end());
  return g;
}

Evaluation evaluate(std::span<const double> theta, const Batch& batch,
                    const SplitModelConfig& cfg) {
  require_same_dim(theta.size(), cfg.total_dim(), "full parameter vector");
  const Matrix z = client_forward(client_part(theta, cfg), batch.inputs, cfg);
  const Matrix pred = server_forward(server_part(theta, cfg), z, cfg);
  Evaluation ev;
  ev.loss = loss_and_grad(pred, batch.labels, cfg, nullptr);
  if (cfg.loss == LossKind::softmax_cross_entropy && pred.rows > 0) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < pred.rows; ++r) {
      const auto row = pred.row(r);
      const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == batch.labels.classes[r]) ++hits;
    }
    ev.accuracy = static_cast<double>(hits) / static_cast<double>(pred.rows);
  }
  return ev;
}

Vector init_parameters(const SplitModelConfig& cfg, std::uint64_t seed, double scale) {
  cfg.validate();
  Vector theta;
  theta.reserve(cfg.total_dim());
  CounterRng rng(seed);
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    const std::size_t in = cfg.layer_dims[l];
    const std::size_t out = cfg.layer_dims[l + 1];
    const double sd = scale / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) theta.push_back(sd * rng.normal());
    if (cfg.bias) theta.insert(theta.end(), out, 0.0);
  }
  return theta;
}

}  // namespace hosfl
