#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "hosfl/error.hpp"
#include "hosfl/split_model.hpp"
#include "hosfl/zo_estimator.hpp"
#include "test_support.hpp"

using namespace hosfl;
using hosfl::testing::Instance;
using hosfl::testing::max_abs_diff;
using hosfl::testing::random_instance;

namespace {

// Independent forward written directly from the layer definition.
struct Naive {
  static double act(Activation a, double x) {
    switch (a) {
      case Activation::identity: return x;
      case Activation::tanh: return std::tanh(x);
      case Activation::relu: return x > 0 ? x : 0.0;
    }
    return x;
  }

  static double loss(const Instance& in) {
    const auto& m = in.model;
    double total = 0.0;
    for (std::size_t b = 0; b < in.batch.size(); ++b) {
      std::vector<double> h(in.batch.inputs.row(b).begin(), in.batch.inputs.row(b).end());
      std::size_t off = 0;
      for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const std::size_t nin = m.layer_dims[l], nout = m.layer_dims[l + 1];
        std::vector<double> o(nout, 0.0);
        for (std::size_t r = 0; r < nout; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < nin; ++c) s += in.theta[off + r * nin + c] * h[c];
          if (m.bias) s += in.theta[off + nin * nout + r];
          o[r] = (l + 1 < m.num_layers()) ? act(m.activation, s) : s;
        }
        off += nin * nout + (m.bias ? nout : 0);
        h = o;
      }
      if (m.loss == LossKind::squared_error) {
        for (std::size_t j = 0; j < h.size(); ++j) {
          const double d = h[j] - in.batch.labels.targets(b, j);
          total += d * d;
        }
      } else {
        double mx = h[0];
        for (double v : h) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : h) z += std::exp(v - mx);
        total += mx + std::log(z) - h[static_cast<std::size_t>(in.batch.labels.classes[b])];
      }
    }
    return total / static_cast<double>(in.batch.size());
  }
};

SplitModelConfig linear_1d() {
  SplitModelConfig m;
  m.layer_dims = {1, 1, 1};
  m.activation = Activation::identity;
  m.cut_index = 1;
  m.bias = false;
  return m;
}

}  // namespace

TEST(SplitModelConfig, DimensionsAddUp) {
  SplitModelConfig m;
  m.layer_dims = {8, 4, 3, 2};
  m.cut_index = 1;
  EXPECT_EQ(m.client_dim(), 8u * 4 + 4);
  EXPECT_EQ(m.server_dim(), 4u * 3 + 3 + 3 * 2 + 2);
  EXPECT_EQ(m.total_dim(), m.client_dim() + m.server_dim());
  EXPECT_EQ(m.cut_width(), 4u);
}

TEST(SplitModelConfig, RejectsBadCut) {
  SplitModelConfig m;
  m.layer_dims = {3, 2, 1};
  m.cut_index = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  m.cut_index = 2;
  EXPECT_THROW(m.validate(), ConfigError);
  m.layer_dims = {3, 0, 1};
  m.cut_index = 1;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(ClientForward, WrongThetaLengthThrows) {
  const auto m = linear_1d();
  Matrix x(1, 1, 1.0);
  EXPECT_THROW(client_forward(Vector{1.0, 2.0}, x, m), DimensionError);
}

TEST(ClientForward, WrongInputWidthThrows) {
  const auto m = linear_1d();
  Matrix x(1, 2, 1.0);
  EXPECT_THROW(client_forward(Vector{1.0}, x, m), DimensionError);
}

TEST(ClientForward, OverflowNamesLayer) {
  SplitModelConfig m = linear_1d();
  Matrix x(1, 1, 1e300);
  try {
    client_forward(Vector{1e300}, x, m);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

TEST(ClientForward, Deterministic) {
  const Instance in = random_instance(3, Activation::tanh);
  const auto c = client_part(in.theta, in.model);
  const Matrix a = client_forward(c, in.batch, in.model);
  const Matrix b = client_forward(c, in.batch, in.model);
  EXPECT_EQ(std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)), 0);
}

TEST(ServerForwardBackward, PerfectFitHasZeroLossAndLambda) {
  const auto m = linear_1d();
  Batch b;
  b.inputs = Matrix(1, 1, 1.0);
  b.labels.targets = Matrix(1, 1, 2.0);
  const Matrix z = client_forward(Vector{2.0}, b, m);
  const ServerPass pass = server_forward_backward(Vector{1.0}, z, b.labels, m);
  EXPECT_EQ(pass.loss, 0.0);
  EXPECT_EQ(pass.lambda(0, 0), 0.0);
  EXPECT_EQ(pass.g_s[0], 0.0);
}

TEST(ServerForwardBackward, LabelCountMismatchThrows) {
  const auto m = linear_1d();
  Matrix z(2, 1, 1.0);
  Labels l;
  l.targets = Matrix(3, 1, 0.0);
  EXPECT_THROW(server_forward_backward(Vector{1.0}, z, l, m), DimensionError);
}

TEST(ServerForwardBackward, ClassOutOfRangeThrows) {
  SplitModelConfig m;
  m.layer_dims = {1, 1, 2};
  m.loss = LossKind::softmax_cross_entropy;
  m.bias = false;
  Matrix z(1, 1, 1.0);
  Labels l;
  l.classes = {2};
  EXPECT_THROW(server_forward_backward(Vector{1.0, 1.0}, z, l, m), DimensionError);
}

TEST(FullLoss, ComposesClientAndServer) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Instance in = random_instance(100 + s, Activation::tanh);
    const Matrix z = client_forward(client_part(in.theta, in.model), in.batch, in.model);
    const double composed = server_loss(server_part(in.theta, in.model), z, in.batch.labels, in.model);
    EXPECT_EQ(full_loss(in.theta, in.batch, in.model), composed);
  }
}

TEST(FullLoss, MatchesIndependentImplementation) {
  for (Activation a : {Activation::identity, Activation::tanh, Activation::relu}) {
    for (std::uint64_t s = 0; s < 15; ++s) {
      const Instance in = random_instance(200 + s, a);
      EXPECT_NEAR(full_loss(in.theta, in.batch, in.model), Naive::loss(in), 1e-12);
    }
  }
}

TEST(Gradients, MatchCentralDifferences) {
  int checked = 0;
  for (Activation a : {Activation::identity, Activation::tanh, Activation::relu}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Instance in = random_instance(300 + s, a);
      const Vector g = full_gradient(in.theta, in.batch, in.model);
      const Vector fd = hosfl::testing::central_difference(in.theta, 0, in.theta.size(), 1e-5,
                                                           in.batch, in.model);
      EXPECT_LT(max_abs_diff(g, fd), 1e-6) << "seed " << 300 + s;
      const Vector gc = analytic_client_gradient(in.theta, in.batch, in.model);
      EXPECT_LT(max_abs_diff(gc, std::span<const double>(fd).first(in.model.client_dim())), 1e-6);
      ++checked;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(Gradients, ClientGradientIsJacobianTransposeLambda) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Instance in = random_instance(400 + s, Activation::tanh);
    const auto tc = client_part(in.theta, in.model);
    const Matrix z = client_forward(tc, in.batch, in.model);
    const ServerPass pass = server_forward_backward(server_part(in.theta, in.model), z,
                                                    in.batch.labels, in.model);
    const Matrix J = client_jacobian(tc, in.batch.inputs, in.model);
    Vector jt(J.cols, 0.0);
    for (std::size_t r = 0; r < J.rows; ++r) {
      for (std::size_t c = 0; c < J.cols; ++c) jt[c] += J(r, c) * pass.lambda.data[r];
    }
    const Vector gc = analytic_client_gradient(in.theta, in.batch, in.model);
    EXPECT_LT(max_abs_diff(gc, jt), 1e-10);
  }
}

TEST(Gradients, LinearClientExplicitJacobian) {
  // z = W x: dz_ij / dW_jk = x_ik, so (J^T lambda)_jk = sum_i lambda_ij x_ik.
  SplitModelConfig m;
  m.layer_dims = {3, 2, 1};
  m.activation = Activation::identity;
  m.bias = false;
  CounterRng rng(5);
  Batch b;
  b.inputs = hosfl::testing::random_matrix(rng, 4, 3);
  b.labels.targets = hosfl::testing::random_matrix(rng, 4, 1);
  const Vector theta = init_parameters(m, 8);
  const Matrix z = client_forward(client_part(theta, m), b, m);
  const ServerPass pass = server_forward_backward(server_part(theta, m), z, b.labels, m);
  Vector expect(6, 0.0);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < 4; ++i) expect[j * 3 + k] += pass.lambda(i, j) * b.inputs(i, k);
    }
  }
  EXPECT_LT(max_abs_diff(analytic_client_gradient(theta, b, m), expect), 1e-12);
}

TEST(Gradients, ReluSubgradientAtZeroIsZero) {
  SplitModelConfig m;
  m.layer_dims = {1, 1, 1};
  m.activation = Activation::relu;
  m.bias = false;
  Batch b;
  b.inputs = Matrix(1, 1, 0.0);
  b.labels.targets = Matrix(1, 1, 1.0);
  const Vector theta{1.0, 1.0};
  const Vector g = full_gradient(theta, b, m);
  EXPECT_EQ(g[0], 0.0);
}

TEST(Evaluate, AccuracyOnSeparableToy) {
  SplitModelConfig m;
  m.layer_dims = {1, 1, 2};
  m.activation = Activation::identity;
  m.loss = LossKind::softmax_cross_entropy;
  m.bias = false;
  Batch b;
  b.inputs = Matrix(2, 1);
  b.inputs(0, 0) = -1.0;
  b.inputs(1, 0) = 1.0;
  b.labels.classes = {0, 1};
  const Vector theta{1.0, -5.0, 5.0};
  const Evaluation ev = evaluate(theta, b, m);
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_LT(ev.loss, 1e-4);
}

TEST(InitParameters, DeterministicWithZeroBiases) {
  SplitModelConfig m;
  m.layer_dims = {4, 3, 2};
  const Vector a = init_parameters(m, 1);
  EXPECT_EQ(a, init_parameters(m, 1));
  EXPECT_NE(a, init_parameters(m, 2));
  for (std::size_t i = 12; i < 15; ++i) EXPECT_EQ(a[i], 0.0);
}
