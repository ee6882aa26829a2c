#include "hosfl/zo_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"

namespace hosfl {
namespace {

constexpr std::uint64_t kBiasDomain = 0x62696173;  // "bias"

Vector perturbed(std::span<const double> theta, double scale, std::span<const double> u) {
  return axpy(scale, u, theta);
}

// Largest singular value by power iteration on A^T A from a fixed start.
double spectral_norm(const Matrix& a) {
  if (a.rows == 0 || a.cols == 0) return 0.0;
  Vector x = gaussian_vector(0x5eed, a.cols);
  double nx = norm(x);
  scale_inplace(1.0 / nx, x);
  double sigma_sq = 0.0;
  Vector ax(a.rows);
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t r = 0; r < a.rows; ++r) ax[r] = dot(a.row(r), x);
    Vector aty(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) axpy_inplace(ax[r], a.row(r), aty);
    const double next = norm(aty);
    if (next == 0.0) return 0.0;
    scale_inplace(1.0 / next, aty);
    x = std::move(aty);
    const bool converged = std::abs(next - sigma_sq) <= 1e-13 * next;
    sigma_sq = next;
    if (converged) break;
  }
  return std::sqrt(sigma_sq);
}

}  // namespace

void ZoConfig::validate() const {
  if (perturbations < 1) throw ConfigError("zo.perturbations: must be >= 1");
  if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("zo.mu: must lie in (0, 1)");
}

std::vector<std::uint64_t> perturbation_seeds(std::uint64_t root_seed, std::uint64_t round,
                                              std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t p = 0; p < count; ++p) {
    seeds[p] = derive_seed({root_seed, round, static_cast<std::uint64_t>(p + 1)});
  }
  return seeds;
}

Vector zo_scalars_along(std::span<const double> theta_c, const Matrix& lambda,
                        const Matrix& z_anchor, const Matrix& inputs,
                        std::span<const Vector> directions, double mu,
                        const SplitModelConfig& model) {
  if (lambda.rows != z_anchor.rows || lambda.cols != z_anchor.cols) {
    throw DimensionError("zo_scalars: lambda is " + std::to_string(lambda.rows) + "x" +
                         std::to_string(lambda.cols) + " but the anchor activation is " +
                         std::to_string(z_anchor.rows) + "x" + std::to_string(z_anchor.cols));
  }
  Vector values(directions.size());
  for (std::size_t p = 0; p < directions.size(); ++p) {
    require_same_dim(directions[p].size(), theta_c.size(), "perturbation direction");
    const Vector shifted = perturbed(theta_c, mu, directions[p]);
    const Matrix z_tilde = client_forward(shifted, inputs, model);
    if (z_tilde.rows != z_anchor.rows || z_tilde.cols != z_anchor.cols) {
      throw DimensionError("zo_scalars: anchor activation does not match the client output");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < z_tilde.data.size(); ++k) {
      acc += lambda.data[k] * (z_tilde.data[k] - z_anchor.data[k]);
    }
    if (!std::isfinite(acc)) {
      throw NumericError("non-finite scalar projection for perturbation " + std::to_string(p + 1));
    }
    values[p] = acc;
  }
  return values;
}

ScalarProjections zo_scalars(std::span<const double> theta_c, const Matrix& lambda,
                             const Matrix& z_anchor, const Batch& batch,
                             std::span<const std::uint64_t> seeds, const ZoConfig& zo,
                             const SplitModelConfig& model, std::uint64_t round,
                             std::size_t client) {
  require_same_dim(seeds.size(), zo.perturbations, "seed count");
  std::vector<Vector> directions;
  directions.reserve(seeds.size());
  for (std::uint64_t s : seeds) directions.push_back(gaussian_vector(s, theta_c.size()));
  ScalarProjections out;
  out.values = zo_scalars_along(theta_c, lambda, z_anchor, batch.inputs, directions, zo.mu, model);
  out.round = round;
  out.client = client;
  return out;
}

Vector reconstruct_gradient_along(std::span<const double> scalars,
                                  std::span<const Vector> directions, const ZoConfig& zo) {
  require_same_dim(scalars.size(), directions.size(), "reconstruct_gradient scalars");
  require_same_dim(scalars.size(), zo.perturbations, "reconstruct_gradient perturbation count");
  const std::size_t dim = directions.empty() ? 0 : directions.front().size();
  Vector g(dim, 0.0);
  const double denom = static_cast<double>(zo.perturbations) * zo.mu;
  for (std::size_t p = 0; p < scalars.size(); ++p) {
    axpy_inplace(scalars[p] / denom, directions[p], g);
  }
  return g;
}

Vector reconstruct_gradient(std::span<const double> scalars,
                            std::span<const std::uint64_t> seeds, const ZoConfig& zo,
                            std::size_t client_dim) {
  require_same_dim(scalars.size(), seeds.size(), "reconstruct_gradient seeds");
  require_same_dim(scalars.size(), zo.perturbations, "reconstruct_gradient perturbation count");
  Vector g(client_dim, 0.0);
  const double denom = static_cast<double>(zo.perturbations) * zo.mu;
  for (std::size_t p = 0; p < scalars.size(); ++p) {
    axpy_inplace(scalars[p] / denom, gaussian_vector(seeds[p], client_dim), g);
  }
  return g;
}

Vector spsa_estimate_along(std::span<const double> theta, const Batch& batch, double mu,
                           std::span<const double> direction, const SplitModelConfig& model) {
  if (!(mu > 0.0)) throw ConfigError("spsa: mu must be positive");
  require_same_dim(direction.size(), theta.size(), "spsa direction");
  const double up = full_loss(perturbed(theta, mu, direction), batch, model);
  const double down = full_loss(perturbed(theta, -mu, direction), batch, model);
  const double coeff = (up - down) / (2.0 * mu);
  if (!std::isfinite(coeff)) throw NumericError("non-finite SPSA finite difference");
  Vector g(direction.begin(), direction.end());
  scale_inplace(coeff, g);
  return g;
}

Vector spsa_estimate(std::span<const double> theta, const Batch& batch, double mu,
                     std::uint64_t seed, const SplitModelConfig& model) {
  return spsa_estimate_along(theta, batch, mu, gaussian_vector(seed, theta.size()), model);
}

TheoryBounds theory_bounds(std::size_t client_dim, std::size_t perturbations, double mu,
                           double gamma) {
  const double d = static_cast<double>(client_dim);
  const double p = static_cast<double>(perturbations);
  const double g4 = gamma * gamma * gamma * gamma;
  TheoryBounds b;
  b.c1 = 2.0 * (1.0 + (d + 1.0) / p);
  b.sigma_zo_sq = (mu * mu / 2.0) * d * (d + 2.0) * (d + 4.0) * g4;
  b.bias_bound_sq = (mu * mu * g4 / 4.0) * (d + 3.0) * (d + 3.0) * (d + 3.0);
  b.client_dim = client_dim;
  b.perturbations = perturbations;
  b.mu = mu;
  b.gamma = gamma;
  return b;
}

Matrix client_jacobian(std::span<const double> theta_c, const Matrix& inputs,
                       const SplitModelConfig& model) {
  const Matrix z = client_forward(theta_c, inputs, model);
  Matrix jac(z.size(), theta_c.size());
  Matrix seed(z.rows, z.cols);
  for (std::size_t k = 0; k < z.size(); ++k) {
    seed.data[k] = 1.0;
    const Vector row = client_vjp(theta_c, inputs, seed, model);
    std::copy(row.begin(), row.end(), jac.row(k).begin());
    seed.data[k] = 0.0;
  }
  return jac;
}

GammaEstimate measure_gamma(std::span<const double> theta, const Batch& batch,
                            const SplitModelConfig& model, double fd_step) {
  const auto theta_c = client_part(theta, model);
  const std::size_t dc = theta_c.size();
  const Matrix z = client_forward(theta_c, batch.inputs, model);
  const ServerPass pass = server_forward_backward(server_part(theta, model), z, batch.labels, model);

  GammaEstimate est;
  est.lambda_norm = norm(pass.lambda.data);
  est.jacobian_op_norm = spectral_norm(client_jacobian(theta_c, batch.inputs, model));

  // hessians[k](i, j) = d^2 z_k / dtheta_i dtheta_j
  std::vector<Matrix> hessians(z.size(), Matrix(dc, dc));
  Vector shifted(theta_c.begin(), theta_c.end());
  for (std::size_t j = 0; j < dc; ++j) {
    shifted[j] = theta_c[j] + fd_step;
    const Matrix up = client_jacobian(shifted, batch.inputs, model);
    shifted[j] = theta_c[j] - fd_step;
    const Matrix down = client_jacobian(shifted, batch.inputs, model);
    shifted[j] = theta_c[j];
    for (std::size_t k = 0; k < z.size(); ++k) {
      for (std::size_t i = 0; i < dc; ++i) {
        hessians[k](i, j) = (up(k, i) - down(k, i)) / (2.0 * fd_step);
      }
    }
  }
  double sum_sq = 0.0;
  for (Matrix& h : hessians) {
    for (std::size_t i = 0; i < dc; ++i) {
      for (std::size_t j = i + 1; j < dc; ++j) {
        const double sym = 0.5 * (h(i, j) + h(j, i));
        h(i, j) = sym;
        h(j, i) = sym;
      }
    }
    const double s = spectral_norm(h);
    sum_sq += s * s;
  }
  est.hessian_op_norm = std::sqrt(sum_sq);
  est.gamma = std::max({est.lambda_norm, est.jacobian_op_norm, est.hessian_op_norm});
  return est;
}

EstimatorDiagnostics estimator_diagnostics(const SplitModelConfig& model,
                                           std::span<const double> theta, const Batch& batch,
                                           const ZoConfig& zo, std::size_t n_trials,
                                           std::uint64_t root_seed) {
  if (n_trials < 1) throw ConfigError("estimator_diagnostics: n_trials must be >= 1");
  zo.validate();
  const auto theta_c = client_part(theta, model);
  const std::size_t dc = theta_c.size();
  const Matrix z = client_forward(theta_c, batch.inputs, model);
  const ServerPass pass = server_forward_backward(server_part(theta, model), z, batch.labels, model);

  EstimatorDiagnostics diag;
  diag.trials = n_trials;
  diag.true_g_c = client_vjp(theta_c, batch.inputs, pass.lambda, model);
  diag.true_g_c_norm_sq = norm_sq(diag.true_g_c);

  Vector sum(dc, 0.0);
  double second = 0.0;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const auto seeds = perturbation_seeds(root_seed, trial, zo.perturbations);
    const auto v = zo_scalars(theta_c, pass.lambda, z, batch, seeds, zo, model, trial);
    const Vector g = reconstruct_gradient(v.values, seeds, zo, dc);
    axpy_inplace(1.0, g, sum);
    second += norm_sq(g);
  }
  const double inv_n = 1.0 / static_cast<double>(n_trials);
  scale_inplace(inv_n, sum);
  diag.mean_estimate = std::move(sum);
  diag.empirical_second_moment = second * inv_n;
  diag.empirical_variance = diag.empirical_second_moment - norm_sq(diag.mean_estimate);
  const Vector err = axpy(-1.0, diag.true_g_c, diag.mean_estimate);
  diag.plain_bias_sq = norm_sq(err);

  // E[g_hat] over u equals the mean of the antithetic pair average
  // (v(u) - v(-u)) u / (2 mu); subtracting (g^T u) u removes the linear term.
  Vector bias(dc, 0.0);
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const Vector u = gaussian_vector(derive_stream(root_seed, kBiasDomain, trial), dc);
    const Matrix up = client_forward(perturbed(theta_c, zo.mu, u), batch.inputs, model);
    const Matrix down = client_forward(perturbed(theta_c, -zo.mu, u), batch.inputs, model);
    double diff = 0.0;
    for (std::size_t k = 0; k < up.data.size(); ++k) {
      diff += pass.lambda.data[k] * (up.data[k] - down.data[k]);
    }
    const double coeff = diff / (2.0 * zo.mu) - dot(diag.true_g_c, u);
    axpy_inplace(coeff, u, bias);
  }
  scale_inplace(inv_n, bias);
  diag.empirical_bias_sq = norm_sq(bias);
  return diag;
}

}  // namespace hosfl
