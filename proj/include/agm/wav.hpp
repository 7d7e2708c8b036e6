#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace agm {

struct Audio {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  std::size_t sample_rate = 0;
};

/// Mono 16-bit PCM RIFF/WAVE. Samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::size_t sample_rate);

/// Reads mono 16-bit PCM or 32-bit float WAVE files.
Audio read_wav(const std::filesystem::path& path);

/// What a PCM16 write/read round trip does to a sample.
double quantize_pcm16(double x);

}  // namespace agm
