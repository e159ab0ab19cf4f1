#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corefed/datasets.hpp"
#include "corefed/model.hpp"
#include "corefed/representation.hpp"

namespace corefed {

/// Angle (radians, in [0, pi]) between two flattened models; nullopt when
/// either has zero norm.
std::optional<double> d_cosine(const ParameterVector& client, const ParameterVector& global);

/// L1 distance between two flattened models.
double d_manhattan(const ParameterVector& client, const ParameterVector& global);

struct AccuracyResult {
  double mean = 0.0;
  std::map<ClientId, double> per_client;
};

/// Per-client argmax accuracy on each shard's test slice and their unweighted
/// mean. Shards with empty test slices are left out.
AccuracyResult evaluate_accuracy(const ParameterVector& global, const ModelSpec& spec,
                                 const std::vector<Shard>& shards);

/// Accuracy over the union of all test slices.
double pooled_accuracy(const ParameterVector& global, const ModelSpec& spec,
                       const std::vector<Shard>& shards);

struct FairnessSummary {
  std::optional<double> d_cosine_mean;
  double d_manhattan_mean = 0.0;
};

FairnessSummary fairness_summary(const std::map<ClientId, ParameterVector>& locals,
                                 const ParameterVector& global);

struct RoundReport {
  int round = 0;
  double mean_accuracy = 0.0;
  std::map<ClientId, double> per_client_accuracy;
  std::optional<double> d_cosine_mean;
  double d_manhattan_mean = 0.0;
  std::map<ClientId, std::optional<double>> contrastive_losses;
  std::map<ClientId, double> weights;
  double learning_rate = 0.0;
  std::set<ClientId> online;
  int window_tau = 0;  // 0 when the algorithm does not use the window
  std::set<ClientId> reused;
  std::vector<AlignmentRecord> alignment;
  std::vector<std::string> warnings;

  std::optional<double> mean_contrastive_loss() const;

  bool operator==(const RoundReport&) const = default;
};

}  // namespace corefed
