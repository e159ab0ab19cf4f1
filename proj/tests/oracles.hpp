#pragma once

// Independent reference implementations used only by tests. None of these
// call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "corefed/datasets.hpp"
#include "corefed/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// Straight-line forward pass over nested vectors, evaluated in long double.
// Reads parameters with its own index arithmetic rather than
// layer_shapes()/unflatten().
using LVec = std::vector<long double>;

struct Forward {
  Mat embeddings;
  Mat logits;
  std::vector<LVec> logits_ld;
};

inline Forward forward_ld(const LVec& p, std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t classes, const Mat& x) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  Forward out;
  for (const Vec& sample : x) {
    LVec a(sample.begin(), sample.end());
    LVec emb;
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::size_t in = widths[l];
      const std::size_t outw = widths[l + 1];
      LVec z(outw, 0.0L);
      for (std::size_t o = 0; o < outw; ++o) {
        long double s = 0.0L;
        for (std::size_t i = 0; i < in; ++i) s += p[pos + o * in + i] * a[i];
        z[o] = s + p[pos + in * outw + o];
      }
      pos += in * outw + outw;
      if (l + 2 < widths.size()) {
        for (long double& v : z) v = v > 0.0L ? v : 0.0L;
      }
      if (l + 3 == widths.size()) emb = z;
      a = z;
    }
    out.embeddings.emplace_back(emb.begin(), emb.end());
    out.logits.emplace_back(a.begin(), a.end());
    out.logits_ld.push_back(a);
  }
  return out;
}

inline Forward forward(const std::vector<double>& p, std::size_t input_dim,
                       const std::vector<std::size_t>& hidden, std::size_t classes, const Mat& x) {
  return forward_ld(LVec(p.begin(), p.end()), input_dim, hidden, classes, x);
}

inline long double cross_entropy(const std::vector<LVec>& logits, const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t r = 0; r < logits.size(); ++r) {
    long double z = 0.0L;
    for (long double v : logits[r]) z += std::exp(v);
    total += std::log(z) - logits[r][static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<long double>(logits.size());
}

inline Mat to_rows(const corefed::Matrix& m) {
  Mat out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

// Central finite differences of the mean cross-entropy, via the oracle forward.
inline std::vector<double> finite_difference_gradient(const std::vector<double>& params, const corefed::ModelSpec& spec,
                                                      const corefed::Batch& batch, double h) {
  const Mat x = to_rows(batch.inputs);
  LVec p(params.begin(), params.end());
  std::vector<double> g(p.size());
  auto eval = [&] {
    return cross_entropy(forward_ld(p, spec.input_dim, spec.hidden_dims, spec.num_classes, x).logits_ld, batch.labels);
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double keep = p[i];
    p[i] = keep + h;
    const long double up = eval();
    p[i] = keep - h;
    const long double down = eval();
    p[i] = keep;
    g[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

// Normalize each feature row, then average over all rows.
inline Vec normalized_mean(const Mat& feats) {
  Vec out(feats.front().size(), 0.0);
  for (const Vec& f : feats) {
    double n = 0.0;
    for (double v : f) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-12) continue;
    for (std::size_t k = 0; k < f.size(); ++k) out[k] += f[k] / n;
  }
  for (double& v : out) v /= static_cast<double>(feats.size());
  return out;
}

// Nearest class-mean classifier, fit and scored on the same data.
inline double nearest_mean_accuracy(const corefed::Dataset& d) {
  const std::size_t dim = d.input_dim();
  Mat means(static_cast<std::size_t>(d.num_classes), Vec(dim, 0.0));
  std::vector<double> counts(static_cast<std::size_t>(d.num_classes), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto c = static_cast<std::size_t>(d.labels[i]);
    for (std::size_t k = 0; k < dim; ++k) means[c][k] += d.inputs(i, k);
    counts[c] += 1.0;
  }
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (double& v : means[c]) v /= std::max(counts[c], 1.0);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < means.size(); ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += (d.inputs(i, k) - means[c][k]) * (d.inputs(i, k) - means[c][k]);
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    correct += static_cast<int>(best) == d.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

// Mean per-client Shannon entropy (nats) of the label distribution.
inline double mean_label_entropy(const corefed::Dataset& d, const corefed::PartitionPlan& plan) {
  double total = 0.0;
  for (int c = 0; c < plan.num_clients; ++c) {
    std::vector<double> hist(static_cast<std::size_t>(d.num_classes), 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
      if (plan.assignment[i] == c) {
        hist[static_cast<std::size_t>(d.labels[i])] += 1.0;
        n += 1.0;
      }
    }
    double h = 0.0;
    for (double v : hist) {
      if (v > 0.0) h -= (v / n) * std::log(v / n);
    }
    total += h;
  }
  return total / plan.num_clients;
}

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Random test fixtures.
inline corefed::ParameterVector random_params(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  corefed::ParameterVector p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = u(rng);
  return p;
}

inline corefed::Batch random_batch(const corefed::ModelSpec& spec, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> y(0, static_cast<int>(spec.num_classes) - 1);
  corefed::Batch b{corefed::Matrix(n, spec.input_dim), {}};
  for (double& v : b.inputs.data()) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(y(rng));
  return b;
}

}  // namespace oracle
