#include <benchmark/benchmark.h>

#include <memory>

#include "hosfl/data.hpp"
#include "hosfl/latency.hpp"
#include "hosfl/prng.hpp"
#include "hosfl/protocol.hpp"
#include "hosfl/zo_estimator.hpp"

using namespace hosfl;

static void BM_GaussianVector(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_vector(seed++, dim));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianVector)->Arg(64)->Arg(4096)->Arg(1 << 16);

static void BM_ZoScalars(benchmark::State& state) {
  SplitModelConfig m;
  m.layer_dims = {32, static_cast<std::size_t>(state.range(0)), 2};
  m.loss = LossKind::softmax_cross_entropy;
  const Dataset d = make_classification_blobs(32, 32, 2, 2.0, 1);
  const Batch b = d.all();
  const Vector theta = init_parameters(m, 1);
  const auto tc = client_part(theta, m);
  const Matrix z = client_forward(tc, b, m);
  const ServerPass pass = server_forward_backward(server_part(theta, m), z, b.labels, m);
  const ZoConfig zo{5, 1e-3};
  std::uint64_t t = 0;
  for (auto _ : state) {
    const auto seeds = perturbation_seeds(1, t++, zo.perturbations);
    benchmark::DoNotOptimize(zo_scalars(tc, pass.lambda, z, b, seeds, zo, m));
  }
  state.counters["d_c"] = static_cast<double>(m.client_dim());
}
BENCHMARK(BM_ZoScalars)->Arg(16)->Arg(128);

static void BM_Round(benchmark::State& state) {
  const auto protocol = static_cast<Protocol>(state.range(0));
  SplitModelConfig m;
  m.layer_dims = {8, 32, 2};
  m.loss = LossKind::softmax_cross_entropy;
  HyperParams hp;
  hp.clients = 10;
  hp.sampled = 5;
  hp.batch_size = 16;
  auto data = std::make_shared<Dataset>(make_classification_blobs(1000, 8, 2, 2.0, 2));
  Federation fed = make_federation(m, hp, data, iid_partition(1000, 10, 2), 2, init_parameters(m, 2));
  for (auto _ : state) benchmark::DoNotOptimize(step(fed, protocol));
  state.SetLabel(std::string(to_string(protocol)));
}
BENCHMARK(BM_Round)->Arg(0)->Arg(1)->Arg(2);

static void BM_ClientSync(benchmark::State& state) {
  const auto missed = static_cast<std::uint64_t>(state.range(0));
  SplitModelConfig m;
  m.layer_dims = {8, 32, 2};
  m.loss = LossKind::softmax_cross_entropy;
  HyperParams hp;
  hp.clients = hp.sampled = 1;
  auto data = std::make_shared<Dataset>(make_classification_blobs(200, 8, 2, 2.0, 3));
  Federation fed = make_federation(m, hp, data, Shards{iid_partition(200, 1, 3)}, 3,
                                   init_parameters(m, 3));
  for (std::uint64_t t = 0; t < missed; ++t) step(fed, Protocol::hosfl);
  const ClientState stale = [&] {
    ClientState c = fed.clients[0];
    const Vector theta0 = init_parameters(m, 3);
    const auto tc = client_part(theta0, m);
    c.theta_c.assign(tc.begin(), tc.end());
    c.t_sync = 0;
    return c;
  }();
  for (auto _ : state) {
    ClientState c = stale;
    client_sync(c, fed.server.history, missed, hp);
    benchmark::DoNotOptimize(c.theta_c.data());
  }
}
BENCHMARK(BM_ClientSync)->Arg(10)->Arg(100);

static void BM_LatencySweep(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(latency_sweep({}, {}, {}, 2, 8, nullptr));
}
BENCHMARK(BM_LatencySweep);

BENCHMARK_MAIN();
