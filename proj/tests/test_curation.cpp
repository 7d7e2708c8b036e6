#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "agm/curation.hpp"
#include "agm/errors.hpp"
#include "agm/synth.hpp"
#include "agm/vad.hpp"
#include "agm/wav.hpp"

using namespace agm;
using agm::test::TempDir;

namespace {

std::vector<SampleRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in, "inline.csv");
}

SampleRecord rec(std::string speaker, int i, int age, Gender g, std::string dataset = "d") {
  return {dataset + "/" + speaker + "/" + std::to_string(i) + ".wav", speaker, age, g, dataset, 1.5};
}

// Random manifest: speakers with random ages, genders and sample counts.
std::vector<SampleRecord> random_manifest(Rng& rng) {
  std::vector<SampleRecord> out;
  const std::size_t speakers = 5 + rng.below(120);
  const char* datasets[] = {"alpha", "beta"};
  for (std::size_t s = 0; s < speakers; ++s) {
    const std::string id = "spk" + std::to_string(s);
    const int age = static_cast<int>(rng.below(90));
    const Gender g = age < 15 && rng.below(2) ? Gender::child : (rng.below(2) ? Gender::female : Gender::male);
    const std::size_t n = 1 + rng.below(60);
    const std::string ds = datasets[rng.below(2)];
    for (std::size_t i = 0; i < n; ++i) out.push_back(rec(id, static_cast<int>(i), age, g, ds));
  }
  return out;
}

std::set<std::string> speakers_of(const std::vector<SampleRecord>& rs) {
  std::set<std::string> s;
  for (const auto& r : rs) s.insert(r.speaker_id);
  return s;
}

std::vector<double> sine(double seconds, std::size_t sr, double amp = 1.0, double f = 440) {
  std::vector<double> w(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = amp * std::sin(2 * std::numbers::pi * f * i / sr);
  return w;
}

}  // namespace

TEST_SUITE("curation") {
  TEST_CASE("manifest parsing") {
    const std::string header = std::string(kManifestHeader) + "\n";
    auto rs = parse(header + "a.wav,s1,30,female,x,1.5\nb.wav,s1,30,female,x,2\nc.wav,s2,7,child,x,0.5\n");
    CHECK(rs.size() == 3);
    CHECK(rs[2].gender == Gender::child);
    CHECK_THROWS_WITH_AS(parse(header + "a.wav,s1,30,female,x,1\nb.wav,s1,40,female,x,1\n"),
                         doctest::Contains("s1"), DataError);
    CHECK_THROWS_AS(parse(header + "a.wav,s1,30,f,x,1\n"), DataError);
    CHECK_THROWS_AS(parse(header + "a.wav,s1,130,male,x,1\n"), DataError);
    CHECK_THROWS_AS(parse(header + "a.wav,s1,30,male,x,1\na.wav,s2,30,male,x,1\n"), DataError);
    CHECK_THROWS_AS(parse(header + "a.wav,s1,30,male,x\n"), DataError);
    CHECK_THROWS_AS(parse("path,speaker\n"), DataError);
    try {
      parse(header + "a.wav,s1,30,male,x,1\nb.wav,s2,abc,male,x,1\n");
    } catch (const DataError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), UsageError);
  }

  TEST_CASE("manifest write/parse round trip") {
    Rng rng(1);
    auto rs = random_manifest(rng);
    sort_records(rs);
    std::ostringstream out;
    write_manifest(out, rs);
    CHECK(parse(out.str()) == rs);
  }

  TEST_CASE("per-speaker cap") {
    std::vector<SampleRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(rec("small", i, 30, Gender::male));
    for (int i = 0; i < 55; ++i) rs.push_back(rec("big", i, 40, Gender::female));
    auto capped = cap_per_speaker(rs, 20, 7);
    std::map<std::string, int> n;
    for (const auto& r : capped) ++n[r.speaker_id];
    CHECK(n["small"] == 5);
    CHECK(n["big"] == 20);
    CHECK(capped == cap_per_speaker(rs, 20, 7));
    CHECK_FALSE(capped == cap_per_speaker(rs, 20, 8));
  }

  TEST_CASE("balanced selection") {
    std::vector<SampleRecord> rs;
    for (int s = 0; s < 3; ++s) rs.push_back(rec("few" + std::to_string(s), 0, 33, Gender::male));
    auto sel = balanced_select(rs, 20, 7, 1);
    CHECK(sel.test.size() == 3);
    CHECK(sel.train_pool.empty());

    std::vector<SampleRecord> many;
    for (int s = 0; s < 50; ++s) many.push_back(rec("m" + std::to_string(s), 0, 20 + s % 10, Gender::female));
    auto a = balanced_select(many, 40, 5, 2);
    CHECK(a.test.size() == 5);
    CHECK(a.train_pool.size() == 35);
    auto b = balanced_select(many, 20, 7, 2);
    CHECK(b.test.size() == 7);
    CHECK(b.train_pool.size() == 13);
  }

  TEST_CASE("dev split sizes") {
    auto ids = [](std::size_t n) {
      std::vector<std::string> v;
      for (std::size_t i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
      return v;
    };
    CHECK(split_dev(ids(10), 0.1, 1).devel.size() == 1);
    CHECK(split_dev(ids(2), 0.1, 1).devel.size() == 1);
    // round-half-up(0.1 * 1671) = 167
    CHECK(split_dev(ids(1671), 0.1, 1).devel.size() == 167);
    CHECK(split_dev(ids(15), 0.1, 1).devel.size() == 2);
    const auto a = split_dev(ids(40), 0.1, 5), b = split_dev(ids(40), 0.1, 5);
    CHECK(a.devel == b.devel);
    CHECK(a.train == b.train);
    CHECK_THROWS(split_dev(ids(1), 0.1, 1));
    CHECK_THROWS(split_dev(ids(10), 0.0, 1));
    CHECK_THROWS(split_dev(ids(10), 1.0, 1));
  }

  TEST_CASE("summary formatting") {
    CHECK(format_counts({29553, 324}) == "29553 (324)");
    SplitManifest m;
    auto fill = [](std::vector<SampleRecord>& out, std::size_t samples, std::size_t speakers, const std::string& tag) {
      for (std::size_t i = 0; i < samples; ++i)
        out.push_back(rec(tag + std::to_string(i % speakers), static_cast<int>(i), 30, Gender::male, "aGender"));
    };
    fill(m.train, 29553, 324, "tr");
    fill(m.devel, 2974, 35, "dv");
    fill(m.test, 20549, 239, "te");
    const std::string text = summary_text(m);
    CHECK(text.find("aGender: 29553 (324) / 2974 (35) / 20549 (239)") != std::string::npos);

    TempDir dir("empty_split");
    SplitManifest e;
    e.train.push_back(rec("a", 0, 30, Gender::male));
    emit_split_lists(e, dir.path());
    CHECK(agm::test::slurp(dir.path() / "test.csv") == std::string(kManifestHeader) + "\n");
    CHECK(agm::test::slurp(dir.path() / "summary.txt").find("0 (0)") != std::string::npos);
  }

  // 100 seeded random manifests through the whole pipeline.
  TEST_CASE("curation invariants on random manifests") {
    Rng gen(4242);
    int trial = 0, rejected = 0;
    while (trial < 100) {
      const auto records = random_manifest(gen);
      CurationParams p;
      p.cap = 1 + gen.below(30);
      p.cell_max = 2 + gen.below(19);
      p.cell_test = 1 + gen.below(std::min<std::size_t>(8, p.cell_max - 1));
      p.dev_fraction = 0.05 + 0.4 * gen.uniform();
      const std::uint64_t seed = gen.next_u64();

      const auto capped = cap_per_speaker(records, p.cap, seed);
      std::map<std::string, std::size_t> before, after;
      for (const auto& r : records) ++before[r.speaker_id];
      for (const auto& r : capped) ++after[r.speaker_id];
      for (const auto& [s, n] : before) {
        CHECK(after[s] <= p.cap);
        if (n <= p.cap) CHECK(after[s] == n);
      }

      // Pools of fewer than 2 training speakers cannot be split; those
      // draws are rejected by curate() and replaced.
      const auto pool = balanced_select(capped, p.cell_max, p.cell_test, derive_seed(seed, "curation.balance"));
      if (pool.train_pool.size() < 2) {
        CHECK_THROWS(curate(records, p, seed));
        ++rejected;
        continue;
      }
      const SplitManifest m = curate(records, p, seed);
      const auto tr = speakers_of(m.train), dv = speakers_of(m.devel), te = speakers_of(m.test);
      for (const auto& s : tr) CHECK_FALSE((dv.contains(s) || te.contains(s)));
      for (const auto& s : dv) CHECK_FALSE(te.contains(s));

      std::map<std::string, std::size_t> per_speaker;
      std::map<std::string, const SampleRecord*> first;
      for (const auto* split : {&m.train, &m.devel, &m.test})
        for (const auto& r : *split) {
          ++per_speaker[r.speaker_id];
          first.emplace(r.speaker_id, &r);
        }
      for (const auto& [s, n] : per_speaker) CHECK(n <= p.cap);

      std::map<std::pair<int, int>, std::size_t> cell_total, cell_test;
      for (const auto& [s, r] : first) {
        const auto key = std::make_pair(r->age_years / 10, static_cast<int>(r->gender));
        ++cell_total[key];
        if (te.contains(s)) ++cell_test[key];
      }
      for (const auto& [k, n] : cell_total) CHECK(n <= p.cell_max);
      for (const auto& [k, n] : cell_test) CHECK(n <= p.cell_test);

      // Table-1 style counts survive a text round trip.
      std::istringstream summary(summary_text(m));
      const auto parsed = parse_summary(summary);
      const auto expect = summarize(m);
      REQUIRE(parsed.size() == expect.size());
      for (std::size_t i = 0; i < parsed.size(); ++i) {
        CHECK(parsed[i].dataset == expect[i].dataset);
        CHECK(parsed[i].train == expect[i].train);
        CHECK(parsed[i].devel == expect[i].devel);
        CHECK(parsed[i].test == expect[i].test);
      }

      if (trial % 10 == 0) {
        TempDir a("cur_a"), b("cur_b");
        emit_split_lists(m, a.path(), "prov");
        emit_split_lists(curate(records, p, seed), b.path(), "prov");
        for (const char* f : {"train.csv", "devel.csv", "test.csv", "summary.txt"})
          CHECK(agm::test::slurp(a.path() / f) == agm::test::slurp(b.path() / f));
        // Emitted lists re-read to the same counts as the summary.
        const SplitManifest back{load_manifest(a.path() / "train.csv"), load_manifest(a.path() / "devel.csv"),
                                 load_manifest(a.path() / "test.csv")};
        CHECK(summary_text(back) == summary_text(m));
      }
      ++trial;
    }
    MESSAGE("rejected " << rejected << " draws with tiny training pools");
  }
}

TEST_SUITE("vad") {
  TEST_CASE("silence and a steady tone") {
    CHECK(vad_segment(std::vector<double>(16000, 0.0), 16000).empty());
    const auto segs = vad_segment(sine(3.0, 16000), 16000);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start_s == doctest::Approx(0.0).epsilon(0.011));
    CHECK(segs[0].end_s == doctest::Approx(3.0).epsilon(0.011));
  }

  TEST_CASE("tone, silence, tone") {
    const std::size_t sr = 16000;
    auto w = sine(1.0, sr);
    w.resize(3 * sr, 0.0);
    const auto tail = sine(1.0, sr);
    w.insert(w.end(), tail.begin(), tail.end());

    // Frame energies from an independent loop: 400-sample frames, 160 hop.
    VadConfig cfg;
    const auto energy = frame_energies_db(w, sr, cfg);
    REQUIRE(energy.size() == 1 + (w.size() - 400) / 160);
    for (std::size_t f : {0u, 50u, 150u, 320u}) {
      double ms = 0.0;
      for (std::size_t i = f * 160; i < f * 160 + 400; ++i) ms += w[i] * w[i];
      ms /= 400.0;
      CHECK(energy[f] == doctest::Approx(10 * std::log10(std::max(ms, 1e-20))));
    }

    const auto segs = vad_segment(w, sr, cfg);
    REQUIRE(segs.size() == 2);
    const double hop = 0.01;
    CHECK(std::abs(segs[0].start_s - 0.0) <= hop);
    CHECK(std::abs(segs[0].end_s - 1.0) <= hop);
    CHECK(std::abs(segs[1].start_s - 3.0) <= hop);
    CHECK(std::abs(segs[1].end_s - 4.0) <= hop);
  }

  TEST_CASE("long recordings are split into legal segments") {
    const std::size_t sr = 8000;
    auto w = sine(50.0, sr, 0.5, 200);
    // a quiet dip at 12 s
    for (std::size_t i = 12 * sr; i < 12 * sr + 400; ++i) w[i] *= 0.2;
    VadConfig cfg;
    const auto segs = vad_segment(w, sr, cfg);
    REQUIRE(segs.size() >= 3);
    double covered = 0.0;
    for (const auto& s : segs) {
      CHECK(s.end_s - s.start_s <= cfg.max_segment_s);
      CHECK(s.end_s - s.start_s >= cfg.min_segment_s);
      covered += s.end_s - s.start_s;
    }
    CHECK(covered > 45.0);
    CHECK(segs[0].end_s == doctest::Approx(12.0).epsilon(0.01));
  }

  TEST_CASE("segments are sorted, disjoint and of legal length") {
    Rng rng(3);
    for (int t = 0; t < 40; ++t) {
      const std::size_t sr = 8000;
      std::vector<double> w;
      const int bursts = 1 + static_cast<int>(rng.below(6));
      for (int b = 0; b < bursts; ++b) {
        w.resize(w.size() + static_cast<std::size_t>(rng.uniform(0.1, 2.0) * sr), 0.0);
        auto tone = sine(rng.uniform(0.1, 8.0), sr, rng.uniform(0.05, 0.9), rng.uniform(100, 900));
        w.insert(w.end(), tone.begin(), tone.end());
      }
      for (auto& x : w) x += 1e-4 * rng.normal();
      VadConfig cfg;
      cfg.max_segment_s = 3.0;
      const auto segs = vad_segment(w, sr, cfg);
      for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].start_s < segs[i].end_s);
        CHECK(segs[i].end_s - segs[i].start_s >= cfg.min_segment_s);
        CHECK(segs[i].end_s - segs[i].start_s <= cfg.max_segment_s);
        if (i) CHECK(segs[i - 1].end_s <= segs[i].start_s);
      }
    }
  }

  TEST_CASE("segment records") {
    const SampleRecord r = rec("s", 0, 30, Gender::female);
    auto w = sine(1.0, 8000);
    w.resize(8000 * 3, 0.0);
    const auto tail = sine(1.0, 8000);
    w.insert(w.end(), tail.begin(), tail.end());
    const auto rs = segment_record(r, w, 8000);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].file_path.rfind(r.file_path + "#0.000-", 0) == 0);
    CHECK(rs[1].speaker_id == "s");
    CHECK(rs[1].duration_s == doctest::Approx(1.0).epsilon(0.02));

    VadConfig bad;
    bad.hop_ms = 30;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_SUITE("synth") {
  TEST_CASE("corpus bookkeeping and determinism") {
    SynthSpec s;
    s.samples_per_speaker = 2;
    s.seed = 9;
    const SynthCorpus a = generate_synth_corpus(s), b = generate_synth_corpus(s);
    CHECK(speakers_of(a.records()).size() == 40);
    REQUIRE(a.utterances.size() == 80);
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
      CHECK(a.utterances[i].waveform == b.utterances[i].waveform);
      CHECK(a.utterances[i].record == b.utterances[i].record);
    }
    // Two speakers of one cell: different audio, same labels' cell.
    const auto& u0 = a.utterances[0];
    const auto& u1 = a.utterances[2];
    CHECK(u0.record.gender == u1.record.gender);
    CHECK(u0.record.age_years / 10 == u1.record.age_years / 10);
    CHECK(u0.waveform != u1.waveform);

    SynthSpec other = s;
    other.seed = 10;
    CHECK(generate_synth_corpus(other).utterances[0].waveform != u0.waveform);
  }

  TEST_CASE("labels are recoverable from the voice parameters") {
    for (Gender g : {Gender::female, Gender::male}) {
      for (int age = 15; age < 100; ++age) {
        CHECK(voice_params(age + 1, g).f0_hz < voice_params(age, g).f0_hz);
        CHECK(voice_params(age + 1, g).tilt > voice_params(age, g).tilt);
      }
    }
    // The child band sits above both adult bands.
    CHECK(voice_params(14, Gender::child).f0_hz > voice_params(15, Gender::female).f0_hz);
    CHECK(voice_params(20, Gender::female).f0_hz > voice_params(20, Gender::male).f0_hz + 50);
    CHECK_FALSE(synth_cell_valid(3, Gender::child));
    CHECK(synth_cell_valid(1, Gender::child));
    CHECK_FALSE(synth_cell_valid(0, Gender::male));
  }

  TEST_CASE("written corpus reloads bit-exactly") {
    SynthSpec s;
    s.decades = {0, 3};
    s.genders = {Gender::child, Gender::female};
    s.speakers_per_cell = 2;
    s.samples_per_speaker = 2;
    s.seed = 4;
    const SynthCorpus c = generate_synth_corpus(s);
    TempDir dir("synth");
    write_corpus(c, dir.path());
    const auto records = load_manifest(dir.path() / "manifest.csv");
    CHECK(records.size() == c.utterances.size());
    const SynthCorpus back = load_corpus(records, dir.path());
    for (std::size_t i = 0; i < c.utterances.size(); ++i) CHECK(back.utterances[i].waveform == c.utterances[i].waveform);

    // Segment suffixes select a time range.
    SampleRecord seg = records[0];
    seg.file_path += "#0.100-0.300";
    const SynthCorpus part = load_corpus(std::vector<SampleRecord>{seg}, dir.path());
    CHECK(part.utterances[0].waveform.size() == 1600);
    CHECK(part.utterances[0].waveform[0] == back.utterances[0].waveform[800]);
  }

  TEST_CASE("wav io") {
    TempDir dir("wav");
    std::vector<double> w{0.0, 0.5, -0.5, 1.0, -1.0};
    for (auto& x : w) x = quantize_pcm16(x);
    write_wav(dir.path() / "a.wav", w, 8000);
    const Audio a = read_wav(dir.path() / "a.wav");
    CHECK(a.sample_rate == 8000);
    CHECK(a.samples == w);
    CHECK_THROWS_AS(read_wav(dir.path() / "missing.wav"), UsageError);
    std::ofstream(dir.path() / "bad.wav") << "RIFFnope";
    CHECK_THROWS(read_wav(dir.path() / "bad.wav"));
  }
}
