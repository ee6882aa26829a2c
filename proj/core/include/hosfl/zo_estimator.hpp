#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hosfl/numeric.hpp"
#include "hosfl/split_model.hpp"

namespace hosfl {

/// Perturbation count P and smoothing parameter mu.
struct ZoConfig {
  std::size_t perturbations = 5;
  double mu = 1e-3;

  /// Throws ConfigError unless P >= 1 and 0 < mu < 1.
  void validate() const;

  friend bool operator==(const ZoConfig&, const ZoConfig&) = default;
};

/// One client's P finite differences for one round, ordered by p.
struct ScalarProjections {
  Vector values;
  std::uint64_t round = 0;
  std::size_t client = 0;
};

/// Shared seeds s_1..s_P for round `round` of a run rooted at `root_seed`.
std::vector<std::uint64_t> perturbation_seeds(std::uint64_t root_seed, std::uint64_t round,
                                              std::size_t count);

/// v_p = <lambda, f_c(theta_c + mu u_p) - z_anchor> for caller-supplied u_p.
/// theta_c is read only; each perturbed forward uses a scratch copy.
Vector zo_scalars_along(std::span<const double> theta_c, const Matrix& lambda,
                        const Matrix& z_anchor, const Matrix& inputs,
                        std::span<const Vector> directions, double mu,
                        const SplitModelConfig& model);

/// Seeded form: u_p = gaussian_vector(seeds[p], d_c). Exactly P client
/// forwards, no backward pass.
ScalarProjections zo_scalars(std::span<const double> theta_c, const Matrix& lambda,
                             const Matrix& z_anchor, const Batch& batch,
                             std::span<const std::uint64_t> seeds, const ZoConfig& zo,
                             const SplitModelConfig& model, std::uint64_t round = 0,
                             std::size_t client = 0);

/// g_hat = sum_p (v_p / (P mu)) u_p, accumulated in p order.
Vector reconstruct_gradient_along(std::span<const double> scalars,
                                  std::span<const Vector> directions, const ZoConfig& zo);
Vector reconstruct_gradient(std::span<const double> scalars,
                            std::span<const std::uint64_t> seeds, const ZoConfig& zo,
                            std::size_t client_dim);

/// Central two-point estimate over the composed loss along `direction`:
/// (L(theta + mu z) - L(theta - mu z)) / (2 mu) * z.
Vector spsa_estimate_along(std::span<const double> theta, const Batch& batch, double mu,
                           std::span<const double> direction, const SplitModelConfig& model);
Vector spsa_estimate(std::span<const double> theta, const Batch& batch, double mu,
                     std::uint64_t seed, const SplitModelConfig& model);

/// Closed-form constants of the local estimator analysis.
struct TheoryBounds {
  double c1 = 0.0;             // 2 (1 + (d_c + 1) / P)
  double sigma_zo_sq = 0.0;    // (mu^2 / 2) d_c (d_c + 2)(d_c + 4) Gamma^4
  double bias_bound_sq = 0.0;  // (mu^2 Gamma^4 / 4)(d_c + 3)^3
  std::size_t client_dim = 0;
  std::size_t perturbations = 0;
  double mu = 0.0;
  double gamma = 0.0;
};

TheoryBounds theory_bounds(std::size_t client_dim, std::size_t perturbations, double mu,
                           double gamma);

/// Analysis-side inputs that never appear at runtime. All optional.
struct TheoryConstants {
  double gamma = 0.0;     // regularity bound
  double sigma_sq = 0.0;  // stochastic gradient variance
  double kappa_sq = 0.0;  // gradient dissimilarity across clients
  double beta = 0.0;      // smoothness
};

/// Instance measurement of the regularity bound:
/// max(||lambda||_F, ||J||_op, Hessian bound) at theta. The Hessian term is
/// sqrt(sum_k ||H_k||_2^2) over activation entries k, which bounds
/// sup_{|u|=1} ||H[u, u]|| from above; H_k comes from central differences of
/// the exact Jacobian.
struct GammaEstimate {
  double lambda_norm = 0.0;
  double jacobian_op_norm = 0.0;
  double hessian_op_norm = 0.0;
  double gamma = 0.0;
};
GammaEstimate measure_gamma(std::span<const double> theta, const Batch& batch,
                            const SplitModelConfig& model, double fd_step = 1e-4);

/// Client Jacobian dz/dtheta_c, rows indexed by flattened activation entries.
Matrix client_jacobian(std::span<const double> theta_c, const Matrix& inputs,
                       const SplitModelConfig& model);

/// Monte Carlo view of the estimator at a fixed (theta, batch).
struct EstimatorDiagnostics {
  std::size_t trials = 0;
  Vector true_g_c;
  Vector mean_estimate;           // plain average of g_hat over trials
  double true_g_c_norm_sq = 0.0;
  double plain_bias_sq = 0.0;     // ||mean_estimate - g_c||^2, includes MC noise
  /// ||E[g_hat] - g_c||^2 estimated with antithetic pairs (u, -u) and the
  /// control variate (g_c^T u) u, whose mean is exactly g_c. Both cancel the
  /// zero-mean parts of the estimator exactly, leaving the curvature bias.
  double empirical_bias_sq = 0.0;
  double empirical_second_moment = 0.0;  // mean ||g_hat||^2
  double empirical_variance = 0.0;       // mean ||g_hat||^2 - ||mean_estimate||^2
};

EstimatorDiagnostics estimator_diagnostics(const SplitModelConfig& model,
                                           std::span<const double> theta, const Batch& batch,
                                           const ZoConfig& zo, std::size_t n_trials,
                                           std::uint64_t root_seed);

}  // namespace hosfl
