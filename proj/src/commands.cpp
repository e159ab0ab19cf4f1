#include "corefed/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "corefed/config.hpp"
#include "corefed/digest.hpp"
#include "corefed/error.hpp"

namespace corefed {

namespace fs = std::filesystem;

namespace {

using nlohmann::ordered_json;

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

ordered_json json_real(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string rounds_csv(const std::vector<RoundReport>& reports) {
  std::ostringstream out;
  out << kRoundsCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.round << ',' << format_real(r.mean_accuracy) << ',' << optional_real(r.d_cosine_mean) << ','
        << format_real(r.d_manhattan_mean) << ',' << format_real(r.learning_rate) << ',' << r.online.size()
        << ',' << optional_real(r.mean_contrastive_loss()) << '\n';
  }
  return out.str();
}

std::string per_client_csv(const std::vector<RoundReport>& reports) {
  std::ostringstream out;
  out << "round,client_id,accuracy\n";
  for (const auto& r : reports) {
    for (const auto& [c, acc] : r.per_client_accuracy) out << r.round << ',' << c << ',' << format_real(acc) << '\n';
  }
  return out.str();
}

ordered_json summary_json(const std::string& run_id, const std::string& hash, const ExperimentConfig& config,
                          const std::vector<RoundReport>& reports) {
  ordered_json doc;
  doc["schema_version"] = kSummarySchemaVersion;
  doc["run_id"] = run_id;
  doc["config_hash"] = hash;
  doc["algorithm"] = std::string(to_string(config.algorithm));
  doc["seed"] = config.seed;
  doc["rounds_completed"] = reports.size();
  doc["fairness_reduction"] = config.fairness_reduction == FairnessReduction::mean_over_rounds ? "mean" : "final";
  if (reports.empty()) {
    doc["final"] = nullptr;
    doc["reduced"] = nullptr;
    return doc;
  }
  const RoundReport& last = reports.back();
  doc["final"] = {{"round", last.round},
                  {"mean_accuracy", last.mean_accuracy},
                  {"d_cosine_mean", json_real(last.d_cosine_mean)},
                  {"d_manhattan_mean", last.d_manhattan_mean},
                  {"learning_rate", last.learning_rate},
                  {"num_online", last.online.size()},
                  {"mean_contrastive_loss", json_real(last.mean_contrastive_loss())}};
  const ReducedMetrics reduced = reduce_metrics(reports, config.fairness_reduction);
  doc["reduced"] = {{"accuracy", reduced.accuracy},
                    {"d_cosine", json_real(reduced.d_cosine)},
                    {"d_manhattan", reduced.d_manhattan}};
  ordered_json per_client = ordered_json::object();
  for (const auto& [c, acc] : last.per_client_accuracy) per_client[std::to_string(c)] = acc;
  doc["per_client_accuracy"] = std::move(per_client);
  ordered_json weights = ordered_json::object();
  for (const auto& [c, w] : last.weights) weights[std::to_string(c)] = w;
  doc["final_weights"] = std::move(weights);
  std::size_t warnings = 0;
  for (const auto& r : reports) warnings += r.warnings.size();
  doc["warning_count"] = warnings;
  return doc;
}

// Prepare an output directory, refusing to clobber unless asked.
void claim_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir)) {
    if (!overwrite) {
      throw IoError("output directory " + dir.string() + " already exists; pass --overwrite to replace it");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

ReducedMetrics run_into(const fs::path& dir, const std::string& run_id, const ExperimentConfig& config,
                        const Federation& federation, std::ostream& log) {
  const std::string resolved = render_config(config);
  const std::string hash = git_blob_hash(resolved);
  write_text(dir / "config.json", resolved);

  RunOptions options;
  if (config.checkpoint_interval > 0) options.checkpoint_dir = dir / "checkpoints";
  options.on_round = [&](const RoundReport& r) {
    for (const auto& w : r.warnings) log << "warning: " << w << '\n';
  };
  const ExperimentResult result = run_experiment(config, federation, options);

  write_text(dir / "rounds.csv", rounds_csv(result.reports));
  write_text(dir / "per_client_accuracy.csv", per_client_csv(result.reports));
  write_text(dir / "summary.json", summary_json(run_id, hash, config, result.reports).dump(2) + "\n");
  if (result.reports.empty()) return {};
  return reduce_metrics(result.reports, config.fairness_reduction);
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ReducedMetrics reduce_metrics(const std::vector<RoundReport>& reports, FairnessReduction reduction) {
  ReducedMetrics out;
  if (reports.empty()) return out;
  out.accuracy = reports.back().mean_accuracy;
  if (reduction == FairnessReduction::final_round) {
    out.d_cosine = reports.back().d_cosine_mean;
    out.d_manhattan = reports.back().d_manhattan_mean;
    return out;
  }
  double cos_sum = 0.0;
  std::size_t cos_n = 0;
  double l1_sum = 0.0;
  for (const auto& r : reports) {
    if (r.d_cosine_mean) {
      cos_sum += *r.d_cosine_mean;
      ++cos_n;
    }
    l1_sum += r.d_manhattan_mean;
  }
  if (cos_n > 0) out.d_cosine = cos_sum / static_cast<double>(cos_n);
  out.d_manhattan = l1_sum / static_cast<double>(reports.size());
  return out;
}

RunManifest make_manifest(const fs::path& config_path, const fs::path& output_dir,
                          const std::optional<std::string>& run_id) {
  RunManifest m;
  m.config_path = config_path;
  m.output_dir = output_dir;
  m.config = parse_config(config_path);
  apply_env_overrides(m.config);
  m.config_hash = git_blob_hash(render_config(m.config));
  m.run_id = run_id.value_or("run-" + m.config_hash.substr(0, 12));
  if (m.run_id.empty() || m.run_id.find('/') != std::string::npos || m.run_id == "." || m.run_id == "..") {
    throw ConfigError("run id must be a plain directory name");
  }
  return m;
}

int cmd_run(const RunManifest& manifest, bool overwrite, std::ostream& log) {
  try {
    const fs::path dir = manifest.output_dir / manifest.run_id;
    const Federation federation = build_federation(manifest.config);
    claim_dir(dir, overwrite);
    const ReducedMetrics m = run_into(dir, manifest.run_id, manifest.config, federation, log);
    log << "run " << manifest.run_id << " (" << to_string(manifest.config.algorithm) << ") finished: accuracy "
        << format_real(m.accuracy) << ", outputs in " << dir.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_sweep(const RunManifest& manifest, const std::vector<Algorithm>& algorithms, bool overwrite,
              std::ostream& log) {
  try {
    if (algorithms.empty()) throw ConfigError("sweep needs at least one algorithm");
    const fs::path dir = manifest.output_dir / manifest.run_id;
    // One federation for every algorithm: identical data, partition and splits.
    const Federation federation = build_federation(manifest.config);
    claim_dir(dir, overwrite);
    std::ostringstream table;
    table << "algorithm,accuracy,d_cosine,d_manhattan\n";
    for (Algorithm a : algorithms) {
      ExperimentConfig cfg = manifest.config;
      cfg.algorithm = a;
      const fs::path sub = dir / std::string(to_string(a));
      fs::create_directories(sub);
      const ReducedMetrics m = run_into(sub, manifest.run_id, cfg, federation, log);
      table << to_string(a) << ',' << format_real(m.accuracy) << ',' << optional_real(m.d_cosine) << ','
            << format_real(m.d_manhattan) << '\n';
      log << "sweep " << manifest.run_id << ": " << to_string(a) << " accuracy " << format_real(m.accuracy) << '\n';
    }
    write_text(dir / "comparison.csv", table.str());
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_validate(const fs::path& config_path, std::ostream& out, std::ostream& log) {
  try {
    ExperimentConfig cfg = parse_config(config_path);
    apply_env_overrides(cfg);
    out << render_config(cfg);
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::vector<Algorithm> parse_algorithm_list(const std::string& csv) {
  std::vector<Algorithm> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const Algorithm a = parse_algorithm(item);
    if (std::find(out.begin(), out.end(), a) != out.end()) {
      throw ConfigError("algorithm '" + item + "' listed twice");
    }
    out.push_back(a);
  }
  if (out.empty()) throw ConfigError("no algorithms given");
  return out;
}

}  // namespace corefed
