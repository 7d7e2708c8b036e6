#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agm/curation.hpp"

namespace agm {

/// Parameters of a synthetic speaker corpus.
///
/// Each speaker is a harmonic source whose fundamental falls and whose
/// spectral tilt steepens with age. Within a gender both are strictly
/// monotone in age, so the label is recoverable from the signal; children
/// occupy their own fundamental band above all adults. `f0_scale` and
/// `tilt_offset` shift the bands to simulate a different recording source.
struct SynthSpec {
  std::vector<int> decades{2, 3, 4, 5};
  std::vector<Gender> genders{Gender::female, Gender::male};
  std::size_t speakers_per_cell = 5;
  std::size_t samples_per_speaker = 10;
  double min_duration_s = 1.0;
  double max_duration_s = 2.0;
  std::size_t sample_rate = 8000;
  double noise_level = 0.01;
  double f0_scale = 1.0;
  double tilt_offset = 0.0;
  std::string dataset = "synth";
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Whether (decade, gender) is a populated cell: children only below 15,
/// adults only from 15.
bool synth_cell_valid(int decade, Gender gender);

/// Noise-free source parameters for an (age, gender) pair before any band
/// shift or per-speaker jitter.
struct VoiceParams {
  double f0_hz = 0.0;
  double tilt = 0.0;
};
VoiceParams voice_params(int age_years, Gender gender);

struct Utterance {
  SampleRecord record;
  std::vector<double> waveform;  // PCM16-quantized, so a WAV round trip is exact
};

struct SynthCorpus {
  std::size_t sample_rate = 0;
  std::vector<Utterance> utterances;

  std::vector<SampleRecord> records() const;
};

SynthCorpus generate_synth_corpus(const SynthSpec& spec);

/// Writes `<dir>/manifest.csv` and one WAV per utterance at
/// `<dir>/<file_path>`.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// Reads the audio of every record. Relative paths resolve against
/// `base_dir`; all files must share one sample rate. A "#<start>-<end>"
/// suffix (VAD segment records) selects that time range of the file.
SynthCorpus load_corpus(std::span<const SampleRecord> records, const std::filesystem::path& base_dir);

}  // namespace agm
