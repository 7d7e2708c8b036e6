#include "agm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>

#include "agm/errors.hpp"
#include "agm/rng.hpp"
#include "agm/wav.hpp"

namespace agm {

void SynthSpec::validate() const {
  std::vector<std::string> issues;
  if (decades.empty()) issues.push_back("synth.decades must not be empty");
  for (int d : decades)
    if (d < 0 || d > 9) issues.push_back("synth.decades entries must be in 0..9");
  if (genders.empty()) issues.push_back("synth.genders must not be empty");
  if (speakers_per_cell < 1) issues.push_back("synth.speakers_per_cell must be >= 1");
  if (samples_per_speaker < 1) issues.push_back("synth.samples_per_speaker must be >= 1");
  if (!(min_duration_s > 0.0 && min_duration_s <= max_duration_s))
    issues.push_back("synth durations need 0 < min_duration_s <= max_duration_s");
  if (sample_rate < 1000) issues.push_back("synth.sample_rate must be >= 1000");
  if (!(noise_level >= 0.0)) issues.push_back("synth.noise_level must be >= 0");
  if (!(f0_scale > 0.0)) issues.push_back("synth.f0_scale must be > 0");
  if (dataset.empty() || dataset.find_first_of(",/\\#") != std::string::npos)
    issues.push_back("synth.dataset must be non-empty without , / \\ #");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

bool synth_cell_valid(int decade, Gender gender) {
  return gender == Gender::child ? decade <= 1 : decade >= 1;
}

VoiceParams voice_params(int age_years, Gender gender) {
  const double a = age_years;
  VoiceParams v;
  switch (gender) {
    case Gender::child: v.f0_hz = 400.0 - 8.0 * (a - 3.0); break;
    case Gender::female: v.f0_hz = 250.0 - 0.9 * (a - 15.0); break;
    case Gender::male: v.f0_hz = 150.0 - 0.6 * (a - 15.0); break;
  }
  v.tilt = 0.6 + 0.025 * a;
  return v;
}

std::vector<SampleRecord> SynthCorpus::records() const {
  std::vector<SampleRecord> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(u.record);
  return out;
}

namespace {

std::pair<int, int> age_range(int decade, Gender gender) {
  int lo = decade * 10, hi = decade * 10 + 9;
  if (gender == Gender::child) {
    lo = std::max(lo, 3);
    hi = std::min(hi, 14);
  } else {
    lo = std::max(lo, 15);
  }
  return {lo, std::min(hi, 100)};
}

std::vector<double> synthesize(double f0, double tilt, double noise, double duration_s,
                               std::size_t sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * static_cast<double>(sample_rate)));
  const double sr = static_cast<double>(sample_rate);
  const double two_pi = 2.0 * std::numbers::pi;
  const double vib_rate = rng.uniform(0.5, 2.0), vib_phase = rng.uniform(0.0, two_pi);
  const double syl_phase = rng.uniform(0.0, two_pi);
  const double amp = rng.uniform(0.3, 0.6);
  const auto harmonics = static_cast<std::size_t>(std::max(1.0, std::floor(0.45 * sr / (f0 * 1.05))));
  std::vector<double> weights(harmonics);
  double norm = 0.0;
  for (std::size_t k = 0; k < harmonics; ++k) {
    weights[k] = std::pow(static_cast<double>(k + 1), -tilt);
    norm += weights[k];
  }
  std::vector<double> out(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double inst_f0 = f0 * (1.0 + 0.03 * std::sin(two_pi * vib_rate * t + vib_phase));
    phase += two_pi * inst_f0 / sr;
    if (phase > two_pi) phase -= two_pi;
    double s = 0.0;
    for (std::size_t k = 0; k < harmonics; ++k) s += weights[k] * std::sin(static_cast<double>(k + 1) * phase);
    const double envelope = 0.6 + 0.4 * std::abs(std::sin(two_pi * 4.0 * t + syl_phase));
    out[i] = quantize_pcm16(amp * envelope * s / norm + noise * rng.normal());
  }
  return out;
}

}  // namespace

SynthCorpus generate_synth_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  corpus.sample_rate = spec.sample_rate;
  std::size_t speaker_index = 0;
  for (Gender gender : spec.genders) {
    for (int decade : spec.decades) {
      if (!synth_cell_valid(decade, gender)) continue;
      const auto [lo, hi] = age_range(decade, gender);
      for (std::size_t s = 0; s < spec.speakers_per_cell; ++s, ++speaker_index) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_spk%04zu", spec.dataset.c_str(), speaker_index);
        Rng spk_rng(derive_seed(spec.seed, std::string("speaker:") + id));
        const int age = lo + static_cast<int>(spk_rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        const VoiceParams base = voice_params(age, gender);
        const double f0 = base.f0_hz * spec.f0_scale * (1.0 + 0.01 * spk_rng.normal());
        const double tilt = base.tilt + spec.tilt_offset + 0.03 * spk_rng.normal();
        const double noise = spec.noise_level * (1.0 + age / 25.0);
        for (std::size_t u = 0; u < spec.samples_per_speaker; ++u) {
          char path[128];
          std::snprintf(path, sizeof path, "%s/%s/%03zu.wav", spec.dataset.c_str(), id, u);
          Rng utt_rng(derive_seed(spec.seed, std::string("utt:") + path));
          const double dur = utt_rng.uniform(spec.min_duration_s, spec.max_duration_s);
          Utterance utt;
          utt.waveform = synthesize(f0, tilt, noise, dur, spec.sample_rate, utt_rng);
          utt.record = {path, id, age, gender, spec.dataset,
                        static_cast<double>(utt.waveform.size()) / static_cast<double>(spec.sample_rate)};
          corpus.utterances.push_back(std::move(utt));
        }
      }
    }
  }
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& u : corpus.utterances) {
    const auto path = dir / u.record.file_path;
    std::filesystem::create_directories(path.parent_path());
    write_wav(path, u.waveform, corpus.sample_rate);
  }
  std::ofstream m(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write '" + (dir / "manifest.csv").string() + "'");
  const auto records = corpus.records();
  write_manifest(m, records);
}

SynthCorpus load_corpus(std::span<const SampleRecord> records, const std::filesystem::path& base_dir) {
  SynthCorpus corpus;
  for (const auto& r : records) {
    // VAD segment records carry "#<start>-<end>" (seconds) after the path.
    std::string file = r.file_path;
    std::optional<std::pair<double, double>> span;
    if (auto hash = file.rfind('#'); hash != std::string::npos) {
      const std::string range = file.substr(hash + 1);
      const auto dash = range.find('-');
      char* end = nullptr;
      if (dash != std::string::npos) {
        const double a = std::strtod(range.c_str(), &end);
        const double b = std::strtod(range.c_str() + dash + 1, &end);
        if (*end == '\0' && b > a) {
          span = {a, b};
          file.resize(hash);
        }
      }
    }
    const std::filesystem::path p(file);
    Audio a = read_wav(p.is_absolute() ? p : base_dir / p);
    if (corpus.sample_rate == 0) corpus.sample_rate = a.sample_rate;
    if (a.sample_rate != corpus.sample_rate)
      throw std::runtime_error("'" + r.file_path + "' has sample rate " + std::to_string(a.sample_rate) +
                               ", expected " + std::to_string(corpus.sample_rate));
    if (span) {
      const auto sr = static_cast<double>(a.sample_rate);
      const auto lo = std::min(a.samples.size(), static_cast<std::size_t>(std::llround(span->first * sr)));
      const auto hi = std::min(a.samples.size(), static_cast<std::size_t>(std::llround(span->second * sr)));
      a.samples = std::vector<double>(a.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                                      a.samples.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    corpus.utterances.push_back({r, std::move(a.samples)});
  }
  return corpus;
}

}  // namespace agm
