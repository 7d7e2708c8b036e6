#include "agm/vad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "agm/errors.hpp"

namespace agm {

void VadConfig::validate() const {
  std::vector<std::string> issues;
  if (!(hop_ms > 0.0)) issues.push_back("vad.hop_ms must be > 0");
  if (!(frame_ms >= hop_ms)) issues.push_back("vad.frame_ms must be >= vad.hop_ms");
  if (!(min_segment_s >= 0.0)) issues.push_back("vad.min_segment_s must be >= 0");
  if (!(min_segment_s < max_segment_s)) issues.push_back("vad.min_segment_s must be < vad.max_segment_s");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

namespace {

struct FrameGeometry {
  std::size_t frame = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
};

FrameGeometry geometry(std::size_t samples, std::size_t sample_rate, const VadConfig& c) {
  FrameGeometry g;
  const double sr = static_cast<double>(sample_rate);
  g.frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(c.frame_ms * 1e-3 * sr)));
  g.hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(c.hop_ms * 1e-3 * sr)));
  // A waveform shorter than one frame still gets a single (short) frame.
  g.count = samples < g.frame ? 1 : 1 + (samples - g.frame) / g.hop;
  return g;
}

}  // namespace

std::vector<double> frame_energies_db(std::span<const double> waveform, std::size_t sample_rate,
                                      const VadConfig& config) {
  config.validate();
  if (waveform.empty()) return {};
  const auto g = geometry(waveform.size(), sample_rate, config);
  std::vector<double> out(g.count);
  for (std::size_t f = 0; f < g.count; ++f) {
    const std::size_t begin = f * g.hop;
    const std::size_t end = std::min(waveform.size(), begin + g.frame);
    double ms = 0.0;
    for (std::size_t i = begin; i < end; ++i) ms += waveform[i] * waveform[i];
    ms /= static_cast<double>(end - begin);
    out[f] = 10.0 * std::log10(std::max(ms, 1e-20));
  }
  return out;
}

std::vector<Segment> vad_segment(std::span<const double> waveform, std::size_t sample_rate,
                                 const VadConfig& config) {
  if (waveform.empty()) return {};
  const auto energy = frame_energies_db(waveform, sample_rate, config);
  const auto g = geometry(waveform.size(), sample_rate, config);
  const double sr = static_cast<double>(sample_rate);
  const double duration = static_cast<double>(waveform.size()) / sr;
  const double hop_s = static_cast<double>(g.hop) / sr;
  const double frame_s = static_cast<double>(g.frame) / sr;

  std::vector<double> sorted = energy;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double peak = *std::max_element(energy.begin(), energy.end());
  const double threshold =
      std::max(config.absolute_floor_db,
               std::min(median + config.energy_threshold_db, peak - config.energy_threshold_db));

  std::vector<bool> speech(energy.size());
  for (std::size_t f = 0; f < energy.size(); ++f)
    speech[f] = energy[f] > config.absolute_floor_db && energy[f] >= threshold;

  // Frame f stands for the hop-wide slice around its centre; the first and
  // last frames extend to the signal edges.
  auto start_of = [&](std::size_t f) {
    return f == 0 ? 0.0 : std::max(0.0, static_cast<double>(f) * hop_s + 0.5 * frame_s - 0.5 * hop_s);
  };
  auto end_of = [&](std::size_t f) {
    return f + 1 == energy.size()
               ? duration
               : std::min(duration, static_cast<double>(f) * hop_s + 0.5 * frame_s + 0.5 * hop_s);
  };

  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last] frames
  for (std::size_t f = 0; f < speech.size();) {
    if (!speech[f]) {
      ++f;
      continue;
    }
    std::size_t last = f;
    while (last + 1 < speech.size() && speech[last + 1]) ++last;
    runs.emplace_back(f, last);
    f = last + 1;
  }

  // Split overlong runs at their quietest interior frame until all fit.
  std::vector<std::pair<std::size_t, std::size_t>> pending(runs.rbegin(), runs.rend());
  std::vector<Segment> out;
  while (!pending.empty()) {
    auto [a, b] = pending.back();
    pending.pop_back();
    const double len = end_of(b) - start_of(a);
    if (len > config.max_segment_s && b > a + 1) {
      // Quietest interior frame among cuts that leave a valid left piece and
      // at least min_segment_s on the right; ties go to the later frame.
      std::optional<std::size_t> cut;
      for (std::size_t f = a + 1; f < b; ++f) {
        const double left = end_of(f - 1) - start_of(a), right = end_of(b) - start_of(f + 1);
        if (left < config.min_segment_s || left > config.max_segment_s || right < config.min_segment_s) continue;
        if (!cut || energy[f] <= energy[*cut]) cut = f;
      }
      if (!cut) {
        cut = a + 1;
        for (std::size_t f = a + 1; f < b; ++f)
          if (energy[f] < energy[*cut]) cut = f;
      }
      // The cut frame is dropped; each side keeps its own frames.
      pending.emplace_back(*cut + 1, b);
      pending.emplace_back(a, *cut - 1);
      continue;
    }
    if (len < config.min_segment_s || len > config.max_segment_s) continue;
    out.push_back({start_of(a), end_of(b)});
  }
  return out;
}

std::vector<SampleRecord> segment_record(const SampleRecord& record,
                                         std::span<const double> waveform,
                                         std::size_t sample_rate, const VadConfig& config) {
  std::vector<SampleRecord> out;
  for (const auto& s : vad_segment(waveform, sample_rate, config)) {
    SampleRecord r = record;
    char buf[64];
    std::snprintf(buf, sizeof buf, "#%.3f-%.3f", s.start_s, s.end_s);
    r.file_path += buf;
    r.duration_s = s.end_s - s.start_s;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace agm
