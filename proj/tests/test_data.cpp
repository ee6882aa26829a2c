#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hosfl/data.hpp"
#include "hosfl/error.hpp"

using namespace hosfl;

namespace {
void expect_partition_law(const Shards& shards, std::size_t n) {
  std::vector<std::size_t> all;
  for (const auto& s : shards) {
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    all.insert(all.end(), s.begin(), s.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(n);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  EXPECT_EQ(all, expect);
}

std::vector<int> balanced_labels(std::size_t n, int classes) {
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(i % classes);
  return l;
}
}  // namespace

TEST(Blobs, SameSeedSameData) {
  EXPECT_EQ(make_classification_blobs(50, 3, 2, 1.0, 4), make_classification_blobs(50, 3, 2, 1.0, 4));
}

TEST(Blobs, BalancedClasses) {
  const Dataset d = make_classification_blobs(101, 2, 3, 1.0, 1);
  std::vector<int> count(3, 0);
  for (int c : d.classes) ++count[c];
  EXPECT_LE(*std::max_element(count.begin(), count.end()) -
                *std::min_element(count.begin(), count.end()),
            1);
}

TEST(Blobs, OneSamplePerClass) {
  const Dataset d = make_classification_blobs(4, 2, 4, 1.0, 1);
  std::vector<int> c = d.classes;
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Blobs, TooFewSamplesRejected) {
  EXPECT_THROW(make_classification_blobs(1, 2, 2, 1.0, 1), ConfigError);
  EXPECT_THROW(make_classification_blobs(10, 2, 1, 1.0, 1), ConfigError);
}

TEST(Blobs, HugeSeparationIsLinearlySeparable) {
  // Least squares on +-1 targets stands in for a reference linear trainer.
  const Dataset d = make_classification_blobs(400, 5, 2, 50.0, 7);
  const std::size_t n = d.size(), k = 6;
  std::vector<double> ata(k * k, 0.0), atb(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d.inputs.row(i).begin(), d.inputs.row(i).end());
    row.push_back(1.0);
    const double y = d.classes[i] == 1 ? 1.0 : -1.0;
    for (std::size_t r = 0; r < k; ++r) {
      atb[r] += row[r] * y;
      for (std::size_t c = 0; c < k; ++c) ata[r * k + c] += row[r] * row[c];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {  // Gauss-Jordan
    std::size_t piv = c;
    for (std::size_t r = c; r < k; ++r) {
      if (std::abs(ata[r * k + c]) > std::abs(ata[piv * k + c])) piv = r;
    }
    for (std::size_t j = 0; j < k; ++j) std::swap(ata[c * k + j], ata[piv * k + j]);
    std::swap(atb[c], atb[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = ata[r * k + c] / ata[c * k + c];
      for (std::size_t j = 0; j < k; ++j) ata[r * k + j] -= f * ata[c * k + j];
      atb[r] -= f * atb[c];
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = atb[k - 1] / ata[(k - 1) * k + k - 1];
    for (std::size_t j = 0; j + 1 < k; ++j) s += d.inputs(i, j) * atb[j] / ata[j * k + j];
    correct += (s > 0) == (d.classes[i] == 1);
  }
  EXPECT_GE(static_cast<double>(correct) / n, 0.99);
}

TEST(Regression, LinearTargetsAreExactWithoutNoise) {
  const Dataset d = make_regression_quadratic(20, 4, 2, 0.0, 3);
  EXPECT_EQ(d.targets.rows, 20u);
  EXPECT_EQ(d.targets.cols, 2u);
  EXPECT_EQ(d, make_regression_quadratic(20, 4, 2, 0.0, 3));
}

TEST(IidPartition, LawAndSizes) {
  const Shards s = iid_partition(103, 5, 9);
  expect_partition_law(s, 103);
  std::size_t lo = 1000, hi = 0;
  for (const auto& x : s) {
    lo = std::min(lo, x.size());
    hi = std::max(hi, x.size());
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(s, iid_partition(103, 5, 9));
}

TEST(DirichletPartition, Law) {
  const auto labels = balanced_labels(300, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    expect_partition_law(dirichlet_partition(labels, 6, 0.5, seed), 300);
  }
}

TEST(DirichletPartition, LargeAlphaIsNearlyEven) {
  const auto labels = balanced_labels(400, 4);
  double dev = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& s : dirichlet_partition(labels, 4, 1000.0, seed)) {
      dev += std::abs(static_cast<double>(s.size()) - 100.0) / 100.0;
    }
  }
  EXPECT_LT(dev / 400.0, 0.15);
}

TEST(DirichletPartition, SmallAlphaIsSkewed) {
  const auto labels = balanced_labels(400, 4);
  int skewed = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    bool any = false;
    for (const auto& s : dirichlet_partition(labels, 4, 0.05, seed)) {
      if (s.empty()) continue;
      std::vector<int> count(4, 0);
      for (std::size_t i : s) ++count[labels[i]];
      any |= *std::max_element(count.begin(), count.end()) >= 0.8 * s.size();
    }
    skewed += any;
  }
  EXPECT_GE(skewed, 20);
}

TEST(DirichletPartition, Deterministic) {
  const auto labels = balanced_labels(90, 3);
  EXPECT_EQ(dirichlet_partition(labels, 3, 1.0, 5), dirichlet_partition(labels, 3, 1.0, 5));
}

TEST(Partition, RegressionIsAlwaysIid) {
  const Dataset d = make_regression_quadratic(40, 2, 1, 0.0, 1);
  const Shards s = partition(d, {PartitionMode::dirichlet, 0.1, 4, 2});
  EXPECT_EQ(s, iid_partition(40, 4, 2));
}

TEST(DatasetIo, RoundTripIsExact) {
  for (const Dataset& d : {make_classification_blobs(25, 3, 3, 1.5, 8),
                           make_regression_quadratic(17, 2, 2, 0.3, 9)}) {
    std::stringstream ss;
    save_dataset(ss, d);
    EXPECT_EQ(ss.str().rfind("#hosfl-dataset", 0), 0u);
    EXPECT_EQ(load_dataset(ss), d);
  }
}

TEST(DatasetIo, MalformedHeaderRejected) {
  std::stringstream ss("not a dataset\n");
  EXPECT_THROW(load_dataset(ss), ConfigError);
}
