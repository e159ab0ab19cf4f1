#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "corefed/datasets.hpp"
#include "corefed/model.hpp"

namespace corefed {

// A point in the feature space produced by the extractor.
struct Embedding {
  std::vector<double> values;

  Embedding() = default;
  explicit Embedding(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double norm() const;

  bool operator==(const Embedding&) const = default;
};

inline constexpr double kNormEpsilon = 1e-12;

struct ClientEmbedding {
  Embedding embedding;
  std::size_t skipped = 0;   // samples whose feature norm fell below kNormEpsilon
  bool degenerate = false;   // every sample was skipped; embedding is zero
};

/// Mean of the unit-normalized feature vectors of `train`.
ClientEmbedding client_embedding(const ParameterVector& model, const ModelSpec& spec,
                                 const Dataset& train);

/// Arithmetic mean of the participating clients' embeddings.
Embedding global_embedding(std::span<const Embedding> embeddings);

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is (near) zero.
double cosine(const Embedding& a, const Embedding& b);
double cosine(std::span<const double> a, std::span<const double> b);

/// InfoNCE loss of client `i` against the global embedding, with the other
/// clients as negatives. Undefined (nullopt) with fewer than two clients.
std::optional<double> contrastive_loss(std::size_t i, std::span<const Embedding> embeddings,
                                       const Embedding& global, double tau_c);

/// The global embedding scaled by the client's alignment score cos(z_i, z_g).
Embedding alignment_vector(const Embedding& client, const Embedding& global);

/// z + beta * (target - z). Requires beta in [0, 1].
Embedding distill(const Embedding& client, const Embedding& target, double beta);

struct AlignmentRecord {
  ClientId client_id = 0;
  Embedding raw;
  double alignment_score = 0.0;
  Embedding refined;
  double similarity = 0.0;
  std::optional<double> contrastive_loss;

  bool operator==(const AlignmentRecord&) const = default;
};

enum class AlignmentMode {
  distill,  // contrastive diagnostic + alignment vector + distillation
  raw,      // similarity of the raw client embedding, nothing else
};

/// Server-side alignment for one round. `ids` and `embeddings` are parallel
/// and ordered by client id.
std::vector<AlignmentRecord> align_clients(std::span<const ClientId> ids,
                                           std::span<const Embedding> embeddings,
                                           const Embedding& global, double beta,
                                           double tau_c, AlignmentMode mode);

}  // namespace corefed
