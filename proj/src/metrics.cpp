#include "corefed/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "corefed/error.hpp"

namespace corefed {

std::optional<double> d_cosine(const ParameterVector& client, const ParameterVector& global) {
  if (client.size() != global.size()) throw MeasurementError("d_cosine: length mismatch");
  double dot = 0.0;
  double nc = 0.0;
  double ng = 0.0;
  for (std::size_t i = 0; i < client.size(); ++i) {
    dot += client[i] * global[i];
    nc += client[i] * client[i];
    ng += global[i] * global[i];
  }
  if (nc == 0.0 || ng == 0.0) return std::nullopt;
  return std::acos(std::clamp(dot / (std::sqrt(nc) * std::sqrt(ng)), -1.0, 1.0));
}

double d_manhattan(const ParameterVector& client, const ParameterVector& global) {
  if (client.size() != global.size()) throw MeasurementError("d_manhattan: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < client.size(); ++i) s += std::abs(client[i] - global[i]);
  return s;
}

AccuracyResult evaluate_accuracy(const ParameterVector& global, const ModelSpec& spec,
                                 const std::vector<Shard>& shards) {
  AccuracyResult out;
  double sum = 0.0;
  for (const auto& shard : shards) {
    if (shard.test.empty()) continue;
    const auto pred = predict(global, spec, shard.test.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == shard.test.labels[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
    out.per_client[shard.client_id] = acc;
    sum += acc;
  }
  if (out.per_client.empty()) throw MeasurementError("no shard has a non-empty test slice");
  out.mean = sum / static_cast<double>(out.per_client.size());
  return out;
}

double pooled_accuracy(const ParameterVector& global, const ModelSpec& spec,
                       const std::vector<Shard>& shards) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& shard : shards) {
    if (shard.test.empty()) continue;
    const auto pred = predict(global, spec, shard.test.inputs);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == shard.test.labels[i];
    total += pred.size();
  }
  if (total == 0) throw MeasurementError("no shard has a non-empty test slice");
  return static_cast<double>(correct) / static_cast<double>(total);
}

FairnessSummary fairness_summary(const std::map<ClientId, ParameterVector>& locals,
                                 const ParameterVector& global) {
  FairnessSummary out;
  if (locals.empty()) return out;
  double cos_sum = 0.0;
  std::size_t cos_count = 0;
  double l1_sum = 0.0;
  for (const auto& [c, local] : locals) {
    if (auto d = d_cosine(local, global)) {
      cos_sum += *d;
      ++cos_count;
    }
    l1_sum += d_manhattan(local, global);
  }
  if (cos_count > 0) out.d_cosine_mean = cos_sum / static_cast<double>(cos_count);
  out.d_manhattan_mean = l1_sum / static_cast<double>(locals.size());
  return out;
}

std::optional<double> RoundReport::mean_contrastive_loss() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [c, l] : contrastive_losses) {
    if (l) {
      sum += *l;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace corefed
