#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "agm/curation.hpp"

namespace agm {

/// Energy-detector settings. A frame counts as speech when its energy is
/// above `absolute_floor_db` (dBFS) and at least
/// min(median + energy_threshold_db, max - energy_threshold_db), where
/// median and max are taken over the file's frame energies. The second
/// bound keeps steady full-length speech from falling under its own median.
struct VadConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double energy_threshold_db = 6.0;
  double absolute_floor_db = -60.0;
  double min_segment_s = 0.5;
  double max_segment_s = 20.0;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Frame energies in dB (10 log10 of mean square, floored at -200 dB).
std::vector<double> frame_energies_db(std::span<const double> waveform, std::size_t sample_rate,
                                      const VadConfig& config);

/// Speech segments: above-threshold frames merged, runs shorter than
/// min_segment_s dropped, runs longer than max_segment_s split at their
/// lowest-energy interior frame that leaves legal-length pieces. Ordered
/// and non-overlapping.
std::vector<Segment> vad_segment(std::span<const double> waveform, std::size_t sample_rate,
                                 const VadConfig& config = {});

/// One record per VAD segment of `record`'s audio. Segment paths are
/// "<file_path>#<start>-<end>" with millisecond-rounded seconds.
std::vector<SampleRecord> segment_record(const SampleRecord& record,
                                         std::span<const double> waveform,
                                         std::size_t sample_rate, const VadConfig& config = {});

}  // namespace agm
