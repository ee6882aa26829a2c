#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"
#include "hosfl/zo_estimator.hpp"
#include "test_support.hpp"

using namespace hosfl;
using hosfl::testing::Instance;
using hosfl::testing::max_abs_diff;
using hosfl::testing::random_instance;

namespace {

SplitModelConfig linear_1d() {
  SplitModelConfig m;
  m.layer_dims = {1, 1, 1};
  m.activation = Activation::identity;
  m.bias = false;
  return m;
}

struct LinearExample {
  SplitModelConfig model = linear_1d();
  Vector theta_c{2.0};
  Matrix x{1, 1, 1.0};
  Matrix lambda{1, 1, 3.0};
  Matrix z;
  LinearExample() { z = client_forward(theta_c, x, model); }
};

}  // namespace

TEST(ZoScalars, ZeroLambdaGivesZeroScalars) {
  const Instance in = random_instance(1, Activation::tanh);
  const auto tc = client_part(in.theta, in.model);
  const Matrix z = client_forward(tc, in.batch, in.model);
  const Matrix lambda(z.rows, z.cols, 0.0);
  const auto seeds = perturbation_seeds(1, 0, 4);
  const auto v = zo_scalars(tc, lambda, z, in.batch, seeds, {4, 1e-3}, in.model);
  for (double x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(ZoScalars, LinearHandExample) {
  LinearExample ex;
  const std::vector<Vector> u{{1.0}};
  const Vector v = zo_scalars_along(ex.theta_c, ex.lambda, ex.z, ex.x, u, 0.1, ex.model);
  EXPECT_NEAR(v[0], 0.3, 1e-14);
}

TEST(ZoScalars, MatchesDirectEvaluation) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Instance in = random_instance(10 + s, Activation::tanh);
    const Vector tc(client_part(in.theta, in.model).begin(), client_part(in.theta, in.model).end());
    const Matrix z = client_forward(tc, in.batch, in.model);
    CounterRng rng(s);
    const Matrix lambda = hosfl::testing::random_matrix(rng, z.rows, z.cols);
    const auto seeds = perturbation_seeds(s, 3, 3);
    const ZoConfig zo{3, 1e-2};
    const auto v = zo_scalars(tc, lambda, z, in.batch, seeds, zo, in.model, 3, 0);
    for (std::size_t p = 0; p < 3; ++p) {
      const Vector u = gaussian_vector(seeds[p], tc.size());
      const Matrix zp = client_forward(axpy(zo.mu, u, tc), in.batch, in.model);
      const double direct = frobenius_dot(lambda, zp) - frobenius_dot(lambda, z);
      EXPECT_NEAR(v.values[p], direct, 1e-12);
    }
  }
}

TEST(ZoScalars, DoesNotMutateTheta) {
  const Instance in = random_instance(21, Activation::relu);
  const Vector tc(client_part(in.theta, in.model).begin(), client_part(in.theta, in.model).end());
  const Vector before = tc;
  const Matrix z = client_forward(tc, in.batch, in.model);
  const auto seeds = perturbation_seeds(2, 0, 5);
  (void)zo_scalars(tc, z, z, in.batch, seeds, {5, 1e-3}, in.model);
  EXPECT_EQ(std::memcmp(before.data(), tc.data(), tc.size() * sizeof(double)), 0);
}

TEST(ZoScalars, AnchorShapeMismatchThrows) {
  LinearExample ex;
  const Matrix bad(2, 1, 0.0);
  const std::vector<Vector> u{{1.0}};
  EXPECT_THROW(zo_scalars_along(ex.theta_c, ex.lambda, bad, ex.x, u, 0.1, ex.model),
               DimensionError);
}

TEST(ZoScalars, SeedCountMustEqualP) {
  LinearExample ex;
  Batch b;
  b.inputs = ex.x;
  const auto seeds = perturbation_seeds(1, 0, 2);
  EXPECT_THROW(zo_scalars(ex.theta_c, ex.lambda, ex.z, b, seeds, {3, 0.1}, ex.model),
               DimensionError);
}

TEST(ReconstructGradient, ZeroScalarsGiveZero) {
  const auto seeds = perturbation_seeds(4, 1, 3);
  const Vector g = reconstruct_gradient(Vector{0.0, 0.0, 0.0}, seeds, {3, 1e-3}, 6);
  for (double x : g) EXPECT_EQ(x, 0.0);
}

TEST(ReconstructGradient, LinearHandExample) {
  const std::vector<Vector> u{{1.0}};
  const Vector g = reconstruct_gradient_along(Vector{0.3}, u, {1, 0.1});
  EXPECT_NEAR(g[0], 3.0, 1e-14);
}

TEST(ReconstructGradient, DoublingScalarsDoublesEstimate) {
  const auto seeds = perturbation_seeds(4, 1, 3);
  const Vector v{0.5, -1.25, 2.0};
  const Vector v2{1.0, -2.5, 4.0};
  const Vector g = reconstruct_gradient(v, seeds, {3, 1e-2}, 7);
  const Vector g2 = reconstruct_gradient(v2, seeds, {3, 1e-2}, 7);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g2[i], 2.0 * g[i]);
}

TEST(ReconstructGradient, LengthMismatchThrows) {
  const auto seeds = perturbation_seeds(4, 1, 2);
  EXPECT_THROW(reconstruct_gradient(Vector{1.0, 2.0, 3.0}, seeds, {3, 1e-2}, 4), DimensionError);
}

TEST(ReconstructGradient, MeanOfScalarsCommutesWithReconstruction) {
  const auto seeds = perturbation_seeds(8, 2, 4);
  const ZoConfig zo{4, 1e-3};
  CounterRng rng(12);
  std::vector<Vector> per_client(5, Vector(4));
  Vector mean(4, 0.0);
  for (auto& v : per_client) {
    for (std::size_t p = 0; p < 4; ++p) {
      v[p] = rng.normal();
      mean[p] += v[p];
    }
  }
  for (double& m : mean) m /= 5.0;
  const Vector from_mean = reconstruct_gradient(mean, seeds, zo, 9);
  Vector mean_of_recon(9, 0.0);
  for (const auto& v : per_client) axpy_inplace(0.2, reconstruct_gradient(v, seeds, zo, 9), mean_of_recon);
  EXPECT_LT(max_abs_diff(from_mean, mean_of_recon), 1e-12);
}

TEST(Spsa, ExactOnOneDimensionalQuadratic) {
  // L(theta) = (theta_c * 1 * theta_s - 0)^2 with theta_s fixed at 1 reduces to theta^2
  // once the server coordinate of the direction is zero.
  SplitModelConfig m = linear_1d();
  Batch b;
  b.inputs = Matrix(1, 1, 1.0);
  b.labels.targets = Matrix(1, 1, 0.0);
  const Vector theta{1.0, 1.0};
  const Vector dir{1.0, 0.0};
  const Vector g = spsa_estimate_along(theta, b, 0.1, dir, m);
  EXPECT_NEAR(g[0], 2.0, 1e-12);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Spsa, ConstantLossGivesZero) {
  SplitModelConfig m = linear_1d();
  Batch b;
  b.inputs = Matrix(1, 1, 0.0);  // z = 0 whatever theta_c is
  b.labels.targets = Matrix(1, 1, 0.0);
  const Vector theta{1.0, 0.0};
  const Vector dir{1.0, 0.0};
  for (double x : spsa_estimate_along(theta, b, 0.1, dir, m)) EXPECT_EQ(x, 0.0);
}

TEST(Spsa, UnbiasedOnLinearRegression) {
  SplitModelConfig m;
  m.layer_dims = {3, 2, 1};
  m.activation = Activation::identity;
  CounterRng rng(77);
  Batch b;
  b.inputs = hosfl::testing::random_matrix(rng, 6, 3);
  b.labels.targets = hosfl::testing::random_matrix(rng, 6, 1);
  const Vector theta = init_parameters(m, 3);
  const Vector g = full_gradient(theta, b, m);
  Vector mean(theta.size(), 0.0);
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    axpy_inplace(1.0 / n, spsa_estimate(theta, b, 1e-3, derive_seed({5, i, 1}), m), mean);
  }
  EXPECT_LT(norm(axpy(-1.0, g, mean)), 0.02 * norm(g) * std::sqrt(theta.size()));
}

TEST(TheoryBounds, ClosedForms) {
  EXPECT_DOUBLE_EQ(theory_bounds(3, 2, 0.1, 1.0).c1, 6.0);
  EXPECT_NEAR(theory_bounds(1, 1, 0.1, 1.0).sigma_zo_sq, 0.075, 1e-15);
  EXPECT_NEAR(theory_bounds(1, 1, 0.1, 1.0).bias_bound_sq, 0.16, 1e-15);
}

TEST(Diagnostics, LinearClientHasNoBias) {
  SplitModelConfig m;
  m.layer_dims = {3, 2, 1};
  m.activation = Activation::identity;
  m.cut_index = 1;
  CounterRng rng(6);
  Batch b;
  b.inputs = hosfl::testing::random_matrix(rng, 4, 3);
  b.labels.targets = hosfl::testing::random_matrix(rng, 4, 1);
  const Vector theta = init_parameters(m, 4);
  const auto d = estimator_diagnostics(m, theta, b, {5, 1e-3}, 100000, 9);
  EXPECT_LE(d.empirical_bias_sq, 1e-3 * d.true_g_c_norm_sq);
  EXPECT_LE(d.plain_bias_sq, 1e-3 * d.true_g_c_norm_sq);
}

// Two identity client layers make z exactly quadratic in theta_c. The
// second-order term of g_hat is cubic in u, so its Gaussian mean is zero and
// the estimator stays unbiased at any mu.
TEST(Diagnostics, QuadraticClientBiasVanishes) {
  SplitModelConfig m;
  m.layer_dims = {2, 2, 2, 1};
  m.activation = Activation::identity;
  m.cut_index = 2;
  CounterRng rng(8);
  Batch b;
  b.inputs = hosfl::testing::random_matrix(rng, 3, 2);
  b.labels.targets = hosfl::testing::random_matrix(rng, 3, 1);
  const Vector theta = init_parameters(m, 5);
  const auto d1 = estimator_diagnostics(m, theta, b, {5, 1e-1}, 20000, 1);
  EXPECT_LT(d1.empirical_bias_sq, 1e-20 + 1e-12 * d1.true_g_c_norm_sq);
}

TEST(Diagnostics, SecondMomentWithinBound) {
  int within = 0, total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Instance in = random_instance(500 + s, Activation::tanh, 40);
    const GammaEstimate gamma = measure_gamma(in.theta, in.batch, in.model);
    const auto bounds = theory_bounds(in.model.client_dim(), 5, 1e-3, gamma.gamma);
    const auto d = estimator_diagnostics(in.model, in.theta, in.batch, {5, 1e-3}, 4000, s);
    within += d.empirical_second_moment <= bounds.c1 * d.true_g_c_norm_sq + bounds.sigma_zo_sq;
    ++total;
  }
  EXPECT_GE(within, 19);
}

TEST(Diagnostics, VarianceShrinksWithP) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Instance in = random_instance(600 + s, Activation::tanh, 40);
    const auto d1 = estimator_diagnostics(in.model, in.theta, in.batch, {1, 1e-3}, 20000, s);
    const auto d10 = estimator_diagnostics(in.model, in.theta, in.batch, {10, 1e-3}, 20000, s);
    const double ratio = d1.empirical_variance / d10.empirical_variance;
    EXPECT_GE(ratio, 5.0) << "seed " << s;
    EXPECT_LE(ratio, 15.0) << "seed " << s;
  }
}

TEST(MeasureGamma, LinearClientHasNoCurvature) {
  SplitModelConfig m;
  m.layer_dims = {3, 2, 1};
  m.activation = Activation::identity;
  CounterRng rng(2);
  Batch b;
  b.inputs = hosfl::testing::random_matrix(rng, 4, 3);
  b.labels.targets = hosfl::testing::random_matrix(rng, 4, 1);
  const auto g = measure_gamma(init_parameters(m, 1), b, m);
  EXPECT_LT(g.hessian_op_norm, 1e-6);
  EXPECT_GT(g.jacobian_op_norm, 0.0);
  EXPECT_EQ(g.gamma, std::max({g.lambda_norm, g.jacobian_op_norm, g.hessian_op_norm}));
}

TEST(ZoConfig, Validation) {
  EXPECT_THROW((ZoConfig{0, 1e-3}).validate(), ConfigError);
  EXPECT_THROW((ZoConfig{1, 0.0}).validate(), ConfigError);
  EXPECT_THROW((ZoConfig{1, 1.5}).validate(), ConfigError);
  EXPECT_NO_THROW((ZoConfig{5, 1e-3}).validate());
}
