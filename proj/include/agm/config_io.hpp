#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "agm/curation.hpp"
#include "agm/model.hpp"
#include "agm/synth.hpp"
#include "agm/train.hpp"
#include "agm/vad.hpp"

namespace agm {

/// Manifest paths for a training run. `base_dir` resolves relative audio
/// paths; empty means each manifest's own directory.
struct DataPaths {
  std::string train;
  std::string devel;
  std::string test;
  std::string audio_dir;
};

/// Everything one CLI job needs. Read from a JSON document whose schema is
/// documented in configs/schema.md; unknown keys are errors.
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  VadConfig vad;
  CurationParams curation;
  DataPaths data;
  /// Synthetic corpora for experiments (and for `train` when no manifests
  /// are given). The second one is the held-out source of cross-corpus runs.
  std::optional<SynthSpec> synth;
  std::optional<SynthSpec> synth_shifted;
  std::string output_dir = "out";
  std::string experiment;
  std::vector<std::size_t> layer_counts;
  std::size_t sweep_seeds = 1;

  /// Throws ConfigError listing every violation.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const VadConfig& c);
nlohmann::json to_json(const CurationParams& c);
nlohmann::json to_json(const SynthSpec& c);
nlohmann::json to_json(const RunConfig& c);

/// Strict readers: every problem is collected and thrown as one ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& c);

/// "agm <version> seed=<seed> config=<hash>" plus any extra fields.
std::string provenance(const RunConfig& c, const std::string& extra = {});

std::string_view library_version();

}  // namespace agm
