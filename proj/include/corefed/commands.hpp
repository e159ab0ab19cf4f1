#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "corefed/experiment.hpp"

namespace corefed {

inline constexpr int kSummarySchemaVersion = 1;
inline constexpr const char* kRoundsCsvHeader =
    "round,mean_accuracy,d_cosine_mean,d_manhattan_mean,learning_rate,num_online,mean_contrastive_loss";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct RunManifest {
  std::filesystem::path config_path;
  std::filesystem::path output_dir;
  std::string run_id;
  std::string config_hash;  // git blob hash of the resolved config text
  ExperimentConfig config;
};

/// Parse the config (with environment overrides) and fix the run identity.
/// The default run id is derived from the config hash.
RunManifest make_manifest(const std::filesystem::path& config_path, const std::filesystem::path& output_dir,
                          const std::optional<std::string>& run_id = std::nullopt);

/// Run one experiment into {output_dir}/{run_id}/.
int cmd_run(const RunManifest& manifest, bool overwrite, std::ostream& log);

/// Run each algorithm on the same seed and partition into
/// {output_dir}/{run_id}/{algorithm}/, plus a comparison.csv alongside.
int cmd_sweep(const RunManifest& manifest, const std::vector<Algorithm>& algorithms, bool overwrite,
              std::ostream& log);

/// Parse and validate a config, printing the resolved form.
int cmd_validate(const std::filesystem::path& config_path, std::ostream& out, std::ostream& log);

std::vector<Algorithm> parse_algorithm_list(const std::string& csv);

/// %.17g rendering used for every numeric CSV field.
std::string format_real(double v);

struct ReducedMetrics {
  double accuracy = 0.0;
  std::optional<double> d_cosine;
  double d_manhattan = 0.0;
};

/// Accuracy is always the final round's; the distances follow the configured reduction.
ReducedMetrics reduce_metrics(const std::vector<RoundReport>& reports, FairnessReduction reduction);

}  // namespace corefed
