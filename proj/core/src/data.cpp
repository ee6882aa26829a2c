#include "hosfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "hosfl/error.hpp"
#include "hosfl/prng.hpp"

namespace hosfl {
namespace {

constexpr std::uint64_t kCentersDomain = 1;
constexpr std::uint64_t kSamplesDomain = 2;
constexpr std::uint64_t kShuffleDomain = 3;

template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(TaskKind t) {
  return t == TaskKind::regression_quadratic ? "regression_quadratic" : "classification_blobs";
}

TaskKind parse_task(std::string_view s) {
  if (s == "regression_quadratic") return TaskKind::regression_quadratic;
  if (s == "classification_blobs") return TaskKind::classification_blobs;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

std::string_view to_string(PartitionMode m) { return m == PartitionMode::iid ? "iid" : "dirichlet"; }

PartitionMode parse_partition_mode(std::string_view s) {
  if (s == "iid") return PartitionMode::iid;
  if (s == "dirichlet") return PartitionMode::dirichlet;
  throw ConfigError("unknown partition mode '" + std::string(s) + "'");
}

Batch Dataset::gather(std::span<const std::size_t> indices) const {
  Batch b;
  b.inputs = Matrix(indices.size(), inputs.cols);
  const bool classification = task == TaskKind::classification_blobs;
  if (classification) {
    b.labels.classes.reserve(indices.size());
  } else {
    b.labels.targets = Matrix(indices.size(), targets.cols);
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    std::copy_n(inputs.row(i).begin(), inputs.cols, b.inputs.row(r).begin());
    if (classification) {
      b.labels.classes.push_back(classes[i]);
    } else {
      std::copy_n(targets.row(i).begin(), targets.cols, b.labels.targets.row(r).begin());
    }
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return gather(idx);
}

Dataset make_classification_blobs(std::size_t n, std::size_t dim, std::size_t classes,
                                  double separation, std::uint64_t seed) {
  if (classes < 2 || n < classes) {
    throw ConfigError("classification_blobs: need n >= classes >= 2");
  }
  Dataset d;
  d.task = TaskKind::classification_blobs;
  d.num_classes = classes;
  d.seed = seed;
  CounterRng centers_rng(derive_stream(seed, kCentersDomain, 0));
  Matrix centers(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    auto row = centers.row(c);
    for (double& v : row) v = centers_rng.normal();
    const double len = norm(row);
    for (double& v : row) v *= separation / len;
  }
  CounterRng rng(derive_stream(seed, kSamplesDomain, 0));
  d.inputs = Matrix(n, dim);
  d.classes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    d.classes[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < dim; ++j) d.inputs(i, j) = centers(c, j) + rng.normal();
  }
  return d;
}

Dataset make_regression_quadratic(std::size_t n, std::size_t dim, std::size_t out_dim,
                                  double noise, std::uint64_t seed) {
  if (n == 0 || dim == 0 || out_dim == 0) {
    throw ConfigError("regression_quadratic: n, dim and out_dim must be positive");
  }
  Dataset d;
  d.task = TaskKind::regression_quadratic;
  d.seed = seed;
  CounterRng teacher_rng(derive_stream(seed, kCentersDomain, 0));
  Matrix a(out_dim, dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    auto row = a.row(o);
    for (double& v : row) v = teacher_rng.normal();
    const double len = norm(row);
    for (double& v : row) v /= len;
  }
  CounterRng rng(derive_stream(seed, kSamplesDomain, 0));
  d.inputs = Matrix(n, dim);
  d.targets = Matrix(n, out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : d.inputs.row(i)) v = rng.normal();
    for (std::size_t o = 0; o < out_dim; ++o) {
      d.targets(i, o) = dot(a.row(o), d.inputs.row(i)) + noise * rng.normal();
    }
  }
  return d;
}

Shards dirichlet_partition(std::span<const int> labels, std::size_t clients, double alpha,
                           std::uint64_t seed) {
  if (clients < 1) throw ConfigError("partition.clients: must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("partition.alpha: must be > 0");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  Shards shards;
  for (int attempt = 0; attempt <= kDirichletRetries; ++attempt) {
    CounterRng rng(derive_stream(seed, kShuffleDomain, static_cast<std::uint64_t>(attempt)));
    shards.assign(clients, {});
    for (auto& [cls, members] : by_class) {
      std::vector<std::size_t> idx = members;
      shuffle(idx, rng);
      std::vector<double> weights(clients);
      double total = 0.0;
      for (double& w : weights) {
        w = rng.gamma(alpha);
        total += w;
      }
      // Cut points floor(cumsum(p) * n_c); the last client takes the remainder.
      const auto nc = static_cast<double>(idx.size());
      std::size_t begin = 0;
      double cum = 0.0;
      for (std::size_t m = 0; m < clients; ++m) {
        std::size_t end = idx.size();
        if (m + 1 < clients && total > 0.0) {
          cum += weights[m];
          end = std::min(idx.size(), static_cast<std::size_t>(std::floor(cum / total * nc)));
          end = std::max(end, begin);
        }
        shards[m].insert(shards[m].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
      }
    }
    const bool any_empty =
        std::any_of(shards.begin(), shards.end(), [](const auto& s) { return s.empty(); });
    if (!any_empty) break;
    if (attempt == kDirichletRetries) {
      std::cerr << "warning: dirichlet_partition left at least one of " << clients
                << " shards empty after " << kDirichletRetries << " retries (alpha=" << alpha
                << ")\n";
    }
  }
  for (auto& s : shards) std::sort(s.begin(), s.end());
  return shards;
}

Shards iid_partition(std::size_t n, std::size_t clients, std::uint64_t seed) {
  if (clients < 1) throw ConfigError("partition.clients: must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CounterRng rng(derive_stream(seed, kShuffleDomain, 0));
  shuffle(idx, rng);
  Shards shards(clients);
  const std::size_t base = n / clients;
  const std::size_t extra = n % clients;
  std::size_t pos = 0;
  for (std::size_t m = 0; m < clients; ++m) {
    const std::size_t len = base + (m < extra ? 1 : 0);
    shards[m].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                     idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(shards[m].begin(), shards[m].end());
    pos += len;
  }
  return shards;
}

Shards partition(const Dataset& data, const PartitionSpec& spec) {
  if (spec.mode == PartitionMode::dirichlet && data.task == TaskKind::classification_blobs) {
    return dirichlet_partition(data.classes, spec.clients, spec.alpha, spec.seed);
  }
  return iid_partition(data.size(), spec.clients, spec.seed);
}

void save_dataset(std::ostream& out, const Dataset& d) {
  const bool cls = d.task == TaskKind::classification_blobs;
  out << "#hosfl-dataset task=" << to_string(d.task) << " n=" << d.size()
      << " n_in=" << d.input_dim() << " n_out=" << d.output_dim() << " classes=" << d.num_classes
      << " seed=" << d.seed << '\n';
  for (std::size_t j = 0; j < d.input_dim(); ++j) out << (j ? "," : "") << 'x' << j;
  if (cls) {
    out << ",label\n";
  } else {
    for (std::size_t o = 0; o < d.targets.cols; ++o) out << ",y" << o;
    out << '\n';
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.input_dim(); ++j) out << (j ? "," : "") << fmt17(d.inputs(i, j));
    if (cls) {
      out << ',' << d.classes[i];
    } else {
      for (std::size_t o = 0; o < d.targets.cols; ++o) out << ',' << fmt17(d.targets(i, o));
    }
    out << '\n';
  }
}

Dataset load_dataset(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#hosfl-dataset", 0) != 0) {
    throw ConfigError("dataset: missing '#hosfl-dataset' header line");
  }
  std::map<std::string, std::string> fields;
  std::istringstream hs(header.substr(std::string("#hosfl-dataset").size()));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("dataset: malformed header field '" + tok + "'");
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(std::string("dataset: header lacks '") + key + "'");
    return it->second;
  };
  Dataset d;
  d.task = parse_task(need("task"));
  const std::size_t n = std::stoull(need("n"));
  const std::size_t n_in = std::stoull(need("n_in"));
  const std::size_t n_out = std::stoull(need("n_out"));
  d.num_classes = std::stoull(need("classes"));
  d.seed = std::stoull(need("seed"));
  const bool cls = d.task == TaskKind::classification_blobs;
  std::string line;
  std::getline(in, line);  // column names
  d.inputs = Matrix(n, n_in);
  if (cls) {
    d.classes.resize(n);
  } else {
    d.targets = Matrix(n, n_out);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) {
      throw ConfigError("dataset: expected " + std::to_string(n) + " rows, got " + std::to_string(i));
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const std::size_t expect = n_in + (cls ? 1 : n_out);
    if (cells.size() != expect) {
      throw ConfigError("dataset: row " + std::to_string(i + 3) + " has " +
                        std::to_string(cells.size()) + " cells, expected " + std::to_string(expect));
    }
    for (std::size_t j = 0; j < n_in; ++j) d.inputs(i, j) = std::stod(cells[j]);
    if (cls) {
      d.classes[i] = std::stoi(cells[n_in]);
    } else {
      for (std::size_t o = 0; o < n_out; ++o) d.targets(i, o) = std::stod(cells[n_in + o]);
    }
  }
  return d;
}

}  // namespace hosfl
