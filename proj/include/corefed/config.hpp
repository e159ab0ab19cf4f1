#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "corefed/experiment.hpp"

namespace corefed {

/// Read a JSON experiment config. Unknown keys are rejected; missing keys
/// take their defaults. A blank file yields the fully-defaulted config.
/// Relative IDX paths resolve against the config file's directory.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Same as parse_config, from text. `base_dir` anchors relative paths.
ExperimentConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {});

/// Canonical, fully-resolved JSON rendering (stable key order, trailing newline).
std::string render_config(const ExperimentConfig& config);

/// Apply COREFED_SEED from the environment, if set.
void apply_env_overrides(ExperimentConfig& config);

}  // namespace corefed
