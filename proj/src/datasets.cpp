#include "corefed/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "corefed/error.hpp"
#include "corefed/rng.hpp"

namespace corefed {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr double kBlobSigma = 0.3;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw IoError("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels,
                                                       std::span<const std::size_t> rows,
                                                       int num_classes) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t r : rows) out[static_cast<std::size_t>(labels[r])].push_back(r);
  return out;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{Matrix(indices.size(), input_dim()), {}, num_classes};
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto src = inputs.row(indices[k]);
    std::copy(src.begin(), src.end(), out.inputs.row(k).begin());
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) throw FormatError("dataset is empty");
  if (inputs.rows() != labels.size()) throw FormatError("dataset inputs/labels count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw FormatError("label outside [0, num_classes)");
  }
}

std::vector<std::size_t> PartitionPlan::samples_of(int client) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == client) out.push_back(i);
  }
  return out;
}

Dataset gen_synthetic(int num_classes, int input_dim, int n, std::uint64_t seed) {
  if (num_classes <= 0 || input_dim <= 0 || n <= 0) {
    throw ConfigError("synthetic dataset parameters must be positive");
  }
  Rng rng = substream(seed, Stream::data);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(input_dim);
  Matrix means(static_cast<std::size_t>(num_classes), dim);
  for (double& v : means.data()) v = unit(rng);

  std::normal_distribution<double> noise(0.0, kBlobSigma);
  Dataset out{Matrix(static_cast<std::size_t>(n), dim), {}, num_classes};
  out.labels.reserve(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
    const int c = static_cast<int>(j % static_cast<std::size_t>(num_classes));
    auto mean = means.row(static_cast<std::size_t>(c));
    auto x = out.inputs.row(j);
    for (std::size_t d = 0; d < dim; ++d) x[d] = std::clamp(mean[d] + noise(rng), 0.0, 1.0);
    out.labels.push_back(c);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (read_be32(images, 0, images_path) != kIdxImagesMagic) {
    throw FormatError("bad IDX3 magic in " + images_path.string());
  }
  if (read_be32(labels, 0, labels_path) != kIdxLabelsMagic) {
    throw FormatError("bad IDX1 magic in " + labels_path.string());
  }
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("IDX file declares no data");
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + count * pixels) throw IoError("truncated IDX3 body in " + images_path.string());
  if (labels.size() < 8 + count) throw IoError("truncated IDX1 body in " + labels_path.string());

  Dataset out{Matrix(count, pixels), {}, 0};
  out.labels.reserve(count);
  const unsigned char* px = images.data() + 16;
  for (std::size_t i = 0; i < count * pixels; ++i) out.inputs.data()[i] = px[i] / 255.0;
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const int y = labels[8 + i];
    out.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  out.num_classes = max_label + 1;
  return out;
}

std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total) {
  const double sum = std::accumulate(proportions.begin(), proportions.end(), 0.0);
  std::vector<std::size_t> counts(proportions.size(), 0);
  if (proportions.empty() || !(sum > 0.0)) return counts;
  std::vector<double> frac(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double exact = proportions[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  // Floating error can push the floors past the total by one; trim from the
  // smallest remainders first.
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++assigned;
  }
  for (std::size_t k = order.size(); assigned > total;) {
    k = (k == 0 ? order.size() : k) - 1;
    if (counts[order[k]] > 0) {
      --counts[order[k]];
      --assigned;
    }
  }
  return counts;
}

PartitionPlan dirichlet_partition(const Dataset& dataset, int m, double alpha, std::uint64_t seed) {
  if (m < 1) throw ConfigError("number of clients must be at least 1");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be positive");
  dataset.validate();

  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto by_class = indices_by_class(dataset.labels, all, dataset.num_classes);
  const auto clients = static_cast<std::size_t>(m);

  Rng rng = substream(seed, Stream::partition);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, clients - 1);

  PartitionPlan plan{alpha, m, seed, std::vector<int>(dataset.size(), -1), 0};
  for (int attempt = 1; attempt <= kPartitionRetryBudget; ++attempt) {
    plan.attempts = attempt;
    std::vector<std::size_t> received(clients, 0);
    for (const auto& members : by_class) {
      if (members.empty()) continue;
      std::vector<double> p(clients);
      for (double& v : p) v = gamma(rng);
      if (!(std::accumulate(p.begin(), p.end(), 0.0) > 0.0)) {
        // Every gamma draw underflowed: the alpha -> 0 limit puts the whole
        // class on one client.
        std::fill(p.begin(), p.end(), 0.0);
        p[pick(rng)] = 1.0;
      }
      const auto counts = largest_remainder(p, members.size());
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::size_t pos = 0;
      for (std::size_t c = 0; c < clients; ++c) {
        for (std::size_t k = 0; k < counts[c]; ++k) plan.assignment[shuffled[pos++]] = static_cast<int>(c);
        received[c] += counts[c];
      }
    }
    if (std::all_of(received.begin(), received.end(), [](std::size_t r) { return r > 0; })) {
      return plan;
    }
  }
  throw PartitionError("could not give every one of " + std::to_string(m) +
                       " clients a sample within " + std::to_string(kPartitionRetryBudget) +
                       " Dirichlet draws");
}

std::vector<Shard> split_test(const Dataset& dataset, const PartitionPlan& plan,
                              double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0,1)");
  }
  if (plan.assignment.size() != dataset.size()) {
    throw PartitionError("partition plan does not cover the dataset");
  }
  std::vector<Shard> shards;
  shards.reserve(static_cast<std::size_t>(plan.num_clients));
  for (int c = 0; c < plan.num_clients; ++c) {
    Rng rng = substream(plan.seed, Stream::split, 0, static_cast<std::uint64_t>(c));
    const auto mine = plan.samples_of(c);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (auto members : indices_by_class(dataset.labels, mine, dataset.num_classes)) {
      const std::size_t n = members.size();
      std::size_t n_test = 0;
      if (n >= 2) {
        const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
        n_test = std::clamp<std::size_t>(want, 1, n - 1);
      }
      std::shuffle(members.begin(), members.end(), rng);
      test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
      train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    Shard s{c, dataset.subset(train_idx), dataset.subset(test_idx), test_idx.empty()};
    shards.push_back(std::move(s));
  }
  return shards;
}

}  // namespace corefed
