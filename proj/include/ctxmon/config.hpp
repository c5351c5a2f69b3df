#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ctxmon/classifiers.hpp"
#include "ctxmon/corpus.hpp"
#include "ctxmon/monitor.hpp"

namespace ctxmon {

// Full experiment description. Every subcommand resolves one of these, so a
// saved config (or run manifest) pins the experiment completely.
struct ExperimentConfig {
  std::string task = "block_transfer";
  std::uint64_t seed = 1;
  std::string output_dir = "runs";

  CorpusParams corpus;
  SimParams sim;

  std::vector<CampaignCell> campaign;  // Table-III-style grid

  GestureTrainOptions gesture;
  DetectorTrainOptions detector;
  double threshold = 0.5;
  MonitorMode monitor_mode = MonitorMode::predicted_gestures;

  double markov_alpha = 0.0;
  std::size_t diverge_min_samples = 30;
  std::size_t diverge_grid_points = 200;

  void validate() const;  // field-level ConfigError on violation
};

// Desk-scale defaults, campaign grid included.
ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& config);
// Missing fields fall back to defaults, so partial configs stay valid.
ExperimentConfig config_from_json(const nlohmann::json& j);

// Reads a config file; a run manifest (with an embedded "config" section) is
// accepted too, so any run can be reproduced from its manifest alone.
ExperimentConfig load_config(const std::string& path);

std::uint64_t config_hash(const ExperimentConfig& config);

// Deterministic manifest (no wall clock) describing one run.
void write_run_manifest(const std::string& dir, const std::string& subcommand,
                        const ExperimentConfig& config,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs);

}  // namespace ctxmon
