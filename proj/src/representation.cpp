#include "corefed/representation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "corefed/error.hpp"

namespace corefed {

namespace {

constexpr std::size_t kEmbeddingChunk = 512;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double Embedding::norm() const { return std::sqrt(dot(values, values)); }

ClientEmbedding client_embedding(const ParameterVector& model, const ModelSpec& spec,
                                 const Dataset& train) {
  if (train.empty()) throw ClientSkipped("cannot embed an empty shard");
  const std::size_t d = spec.embedding_dim();
  std::vector<double> sum(d, 0.0);
  std::size_t used = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < train.size(); start += kEmbeddingChunk) {
    const std::size_t stop = std::min(train.size(), start + kEmbeddingChunk);
    rows.resize(stop - start);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = start + r;
    const Matrix feats = forward(model, spec, make_batch(train, rows)).embeddings;
    for (std::size_t r = 0; r < feats.rows(); ++r) {
      auto f = feats.row(r);
      const double n = std::sqrt(dot(f, f));
      if (n < kNormEpsilon) continue;
      for (std::size_t k = 0; k < d; ++k) sum[k] += f[k] / n;
      ++used;
    }
  }
  ClientEmbedding out;
  out.skipped = train.size() - used;
  // Averaged over the full shard size: skipped samples contribute nothing.
  const double inv = 1.0 / static_cast<double>(train.size());
  for (double& v : sum) v *= inv;
  out.embedding = Embedding(std::move(sum));
  out.degenerate = used == 0;
  return out;
}

Embedding global_embedding(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) throw ProtocolError("global embedding needs at least one client");
  const std::size_t d = embeddings.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& z : embeddings) {
    if (z.size() != d) throw ProtocolError("client embeddings differ in length");
    for (std::size_t k = 0; k < d; ++k) mean[k] += z[k];
  }
  const double inv = 1.0 / static_cast<double>(embeddings.size());
  for (double& v : mean) v *= inv;
  return Embedding(std::move(mean));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ProtocolError("cosine: length mismatch");
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na < kNormEpsilon || nb < kNormEpsilon) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine(const Embedding& a, const Embedding& b) { return cosine(a.values, b.values); }

std::optional<double> contrastive_loss(std::size_t i, std::span<const Embedding> embeddings,
                                       const Embedding& global, double tau_c) {
  if (!(tau_c > 0.0)) throw ConfigError("tau_c must be positive");
  if (i >= embeddings.size()) throw ProtocolError("contrastive_loss: client index out of range");
  if (embeddings.size() < 2) return std::nullopt;
  const Embedding& zi = embeddings[i];
  const double positive = cosine(zi, global) / tau_c;
  std::vector<double> negatives;
  negatives.reserve(embeddings.size() - 1);
  for (std::size_t l = 0; l < embeddings.size(); ++l) {
    if (l != i) negatives.push_back(cosine(zi, embeddings[l]) / tau_c);
  }
  const double m = *std::max_element(negatives.begin(), negatives.end());
  double z = 0.0;
  for (double s : negatives) z += std::exp(s - m);
  return (m + std::log(z)) - positive;
}

Embedding alignment_vector(const Embedding& client, const Embedding& global) {
  if (client.size() != global.size()) throw ProtocolError("alignment_vector: length mismatch");
  const double a = cosine(client, global);
  std::vector<double> out(global.values);
  for (double& v : out) v *= a;
  return Embedding(std::move(out));
}

Embedding distill(const Embedding& client, const Embedding& target, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
  if (client.size() != target.size()) throw ProtocolError("distill: length mismatch");
  std::vector<double> out(client.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = client[k] + beta * (target[k] - client[k]);
  return Embedding(std::move(out));
}

std::vector<AlignmentRecord> align_clients(std::span<const ClientId> ids,
                                           std::span<const Embedding> embeddings,
                                           const Embedding& global, double beta,
                                           double tau_c, AlignmentMode mode) {
  if (ids.size() != embeddings.size()) throw ProtocolError("align_clients: ids/embeddings mismatch");
  std::vector<AlignmentRecord> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    AlignmentRecord rec;
    rec.client_id = ids[i];
    rec.raw = embeddings[i];
    rec.alignment_score = cosine(rec.raw, global);
    if (mode == AlignmentMode::distill) {
      rec.contrastive_loss = contrastive_loss(i, embeddings, global, tau_c);
      rec.refined = distill(rec.raw, alignment_vector(rec.raw, global), beta);
    } else {
      rec.refined = rec.raw;
    }
    rec.similarity = cosine(rec.refined, global);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace corefed
