#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "corefed/aggregation.hpp"
#include "corefed/datasets.hpp"
#include "corefed/metrics.hpp"
#include "corefed/model.hpp"

namespace corefed {

enum class Algorithm {
  corefed,  // representation alignment + contribution-aware aggregation
  cofed,    // contribution-aware aggregation on raw embeddings only
  refed,    // representation alignment, FedAvg aggregation
  fedavg,   // plain FedAvg
};

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);
inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::corefed, Algorithm::cofed,
                                               Algorithm::refed, Algorithm::fedavg};

struct SyntheticSource {
  int num_classes = 10;
  int input_dim = 32;
  int samples = 20000;
  bool operator==(const SyntheticSource&) const = default;
};

struct IdxSource {
  std::string images;
  std::string labels;
  bool operator==(const IdxSource&) const = default;
};

using DatasetSource = std::variant<SyntheticSource, IdxSource>;

// Either an absolute client count or a fraction of all clients.
struct OnlinePerRound {
  bool is_fraction = false;
  double value = 20;

  int resolve(int num_clients) const;
  bool operator==(const OnlinePerRound&) const = default;
};

enum class AccuracyMode { per_client, pooled };
enum class FairnessReduction { final_round, mean_over_rounds };

inline const std::vector<std::size_t> kSyntheticHiddenDims{64, 64};
inline const std::vector<std::size_t> kImageHiddenDims{200, 200};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::corefed;
  int rounds = 1000;
  int clients = 100;
  OnlinePerRound online_per_round{};
  int local_epochs = 1;
  int batch_size = 50;
  double eta0 = 0.1;
  double lr_decay = 0.999;
  double gamma = 0.5;
  double k = 2.0;
  double beta = 0.5;
  double tau_c = 0.07;
  double dirichlet_alpha = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims = kSyntheticHiddenDims;
  DatasetSource dataset = SyntheticSource{};
  double test_fraction = 0.2;
  AccuracyMode accuracy_mode = AccuracyMode::per_client;
  FairnessReduction fairness_reduction = FairnessReduction::final_round;
  int checkpoint_interval = 0;  // rounds between checkpoints; 0 disables
  int threads = 0;              // 0 = hardware concurrency

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct Federation {
  ModelSpec spec;
  PartitionPlan plan;
  std::vector<Shard> shards;
};

/// Load or generate the dataset, partition it and split every shard. Depends
/// only on the seed and the data/partition fields, never on the algorithm.
Federation build_federation(const ExperimentConfig& config);

struct RunState {
  Round t = 0;  // rounds completed
  ParameterVector global;
  ParticipationLedger ledger;
};

RunState initial_state(const ExperimentConfig& config, const ModelSpec& spec);

/// Uniform sample without replacement for round state.t + 1.
std::set<ClientId> sample_clients(const RunState& state, const ExperimentConfig& config);

double lr_schedule(double eta0, double decay, Round t);

/// One full round: sample, train locally, align, aggregate, measure.
RoundReport run_round(RunState& state, const ExperimentConfig& config, const Federation& federation);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const RoundReport&)> on_round;
};

struct ExperimentResult {
  ModelSpec spec;
  ParameterVector initial_global;
  ParameterVector final_global;
  std::vector<RoundReport> reports;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const Federation& federation,
                                const RunOptions& options = {});

}  // namespace corefed
