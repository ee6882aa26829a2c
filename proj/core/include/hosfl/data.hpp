#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "hosfl/numeric.hpp"
#include "hosfl/split_model.hpp"

namespace hosfl {

enum class TaskKind { regression_quadratic, classification_blobs };
std::string_view to_string(TaskKind t);
TaskKind parse_task(std::string_view s);

struct Dataset {
  TaskKind task = TaskKind::classification_blobs;
  Matrix inputs;             // N x n_in
  std::vector<int> classes;  // classification only
  Matrix targets;            // regression only, N x n_out
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.rows; }
  std::size_t input_dim() const { return inputs.cols; }
  std::size_t output_dim() const {
    return task == TaskKind::classification_blobs ? num_classes : targets.cols;
  }

  Batch gather(std::span<const std::size_t> indices) const;
  Batch all() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Isotropic unit-variance Gaussian blobs. Class c has its center at
/// separation * (unit direction drawn from the seed); sample i has class i % classes.
Dataset make_classification_blobs(std::size_t n, std::size_t dim, std::size_t classes,
                                  double separation, std::uint64_t seed);

/// x ~ N(0, I), y = A x + noise * N(0, I), rows of A unit-norm. Under a
/// linear model with squared error this is a quadratic objective.
Dataset make_regression_quadratic(std::size_t n, std::size_t dim, std::size_t out_dim,
                                  double noise, std::uint64_t seed);

enum class PartitionMode { iid, dirichlet };
std::string_view to_string(PartitionMode m);
PartitionMode parse_partition_mode(std::string_view s);

struct PartitionSpec {
  PartitionMode mode = PartitionMode::iid;
  double alpha = 1.0;
  std::size_t clients = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

using Shards = std::vector<std::vector<std::size_t>>;

/// Draws with an empty shard are redrawn up to this many times.
inline constexpr int kDirichletRetries = 10;

/// Per class, proportions ~ Dirichlet(alpha 1_M) split that class's shuffled
/// indices across clients. Every index lands in exactly one shard; shards are
/// sorted ascending. If every retry leaves some shard empty, the last draw is
/// returned and a warning goes to stderr.
Shards dirichlet_partition(std::span<const int> labels, std::size_t clients, double alpha,
                           std::uint64_t seed);

/// Random split into shards whose sizes differ by at most one.
Shards iid_partition(std::size_t n, std::size_t clients, std::uint64_t seed);

/// Dispatches on spec.mode. Regression data is always split IID.
Shards partition(const Dataset& data, const PartitionSpec& spec);

/// Self-describing text dump: a `#hosfl-dataset` header line carrying task,
/// n, n_in, n_out, classes and seed, then a column-name row, then one CSV row
/// per sample with %.17g values.
void save_dataset(std::ostream& out, const Dataset& data);
Dataset load_dataset(std::istream& in);

}  // namespace hosfl
