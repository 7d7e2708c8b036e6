#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agm/config_io.hpp"
#include "agm/curation.hpp"
#include "agm/synth.hpp"
#include "agm/train.hpp"

namespace agm {

/// Waveforms of a curated, speaker-disjoint split.
struct CorpusSplits {
  std::vector<Utterance> train;
  std::vector<Utterance> devel;
  std::vector<Utterance> test;
};

/// Curates the corpus records, then gathers the matching waveforms.
CorpusSplits split_corpus(const SynthCorpus& corpus, const CurationParams& params, std::uint64_t seed);

struct ExampleSplits {
  std::vector<Example> train;
  std::vector<Example> devel;
  std::vector<Example> test;
};

ExampleSplits featurize(const Model& model, const CorpusSplits& splits);

/// One trained configuration and its test metrics.
struct ExperimentRow {
  std::string condition;
  std::size_t layers = 0;
  /// Seed index within a sweep, or "mean" for rows averaged over seeds.
  std::string seed;
  std::vector<std::pair<std::string, double>> metrics;

  std::optional<double> metric(std::string_view name) const;
};

struct ExperimentReport {
  std::string kind;
  std::vector<ExperimentRow> rows;

  const ExperimentRow* find(std::string_view condition, std::string_view seed = {},
                            std::size_t layers = 0) const;
  /// Tidy CSV: kind,condition,layers,seed,metric,value, one value per row.
  std::string to_csv(const std::string& provenance = {}) const;
  /// Wide, human-readable table; one line per row.
  std::string to_table() const;
};

/// {1, 2, 4, 6, ..., max}, with max always included.
std::vector<std::size_t> default_layer_counts(std::size_t max_layers);

/// Age-only, gender-only and combined models on identical data and seeds.
ExperimentReport run_combined_vs_single(const RunConfig& config);
/// Bottom-n truncations of one initialization, each fine-tuned, per seed.
ExperimentReport run_layer_sweep(const RunConfig& config);
/// Train on `synth`, test on `synth_shifted` ("cross"), against training on
/// both ("in_domain").
ExperimentReport run_cross_corpus(const RunConfig& config);
/// Dispatches on config.experiment.
ExperimentReport run_experiment(const RunConfig& config);

}  // namespace agm
