#include "agm/curation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "agm/errors.hpp"
#include "agm/metrics.hpp"
#include "agm/rng.hpp"

namespace agm {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string speaker_key(const SampleRecord& r) { return r.dataset + '\x1f' + r.speaker_id; }

}  // namespace

std::vector<SampleRecord> parse_manifest(std::istream& in, const std::string& source) {
  std::vector<SampleRecord> out;
  std::set<std::string> paths;
  struct Attr {
    int age;
    Gender gender;
    std::size_t line;
  };
  std::map<std::string, Attr> speakers;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      if (line != kManifestHeader)
        throw DataError(source, lineno, std::string("expected header '") + kManifestHeader + "'");
      have_header = true;
      continue;
    }
    const auto f = split_fields(line, ',');
    if (f.size() != 6)
      throw DataError(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
    SampleRecord r;
    r.file_path = std::string(f[0]);
    r.speaker_id = std::string(f[1]);
    r.dataset = std::string(f[4]);
    if (r.file_path.empty()) throw DataError(source, lineno, "empty file_path");
    if (r.speaker_id.empty()) throw DataError(source, lineno, "empty speaker_id");
    if (!parse_number(f[2], r.age_years) || r.age_years < 0 || r.age_years > 100)
      throw DataError(source, lineno, "age_years must be an integer in 0..100, got '" + std::string(f[2]) + "'");
    auto g = parse_gender(f[3]);
    if (!g)
      throw DataError(source, lineno,
                      "unknown gender token '" + std::string(f[3]) + "' (accepted: child, female, male)");
    r.gender = *g;
    if (!parse_number(f[5], r.duration_s) || !(r.duration_s > 0.0) || !std::isfinite(r.duration_s))
      throw DataError(source, lineno, "duration_s must be a positive number, got '" + std::string(f[5]) + "'");
    if (!paths.insert(r.file_path).second)
      throw DataError(source, lineno, "duplicate file_path '" + r.file_path + "'");
    const auto [it, fresh] = speakers.emplace(speaker_key(r), Attr{r.age_years, r.gender, lineno});
    if (!fresh && (it->second.age != r.age_years || it->second.gender != r.gender))
      throw DataError(source, lineno,
                      "speaker '" + r.speaker_id + "' listed with age " + std::to_string(r.age_years) +
                          "/" + std::string(to_string(r.gender)) + " but line " +
                          std::to_string(it->second.line) + " says " + std::to_string(it->second.age) +
                          "/" + std::string(to_string(it->second.gender)));
    out.push_back(std::move(r));
  }
  if (!have_header) throw DataError(source, 0, "missing header line");
  return out;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.string());
}

void write_manifest(std::ostream& out, std::span<const SampleRecord> records) {
  out << kManifestHeader << '\n';
  for (const auto& r : records)
    out << r.file_path << ',' << r.speaker_id << ',' << r.age_years << ',' << to_string(r.gender)
        << ',' << r.dataset << ',' << format_number(r.duration_s) << '\n';
}

void sort_records(std::vector<SampleRecord>& records) {
  std::sort(records.begin(), records.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return std::tie(a.speaker_id, a.file_path) < std::tie(b.speaker_id, b.file_path);
  });
}

std::vector<SampleRecord> cap_per_speaker(std::span<const SampleRecord> records, std::size_t cap,
                                          std::uint64_t seed) {
  if (cap < 1) throw std::invalid_argument("cap_per_speaker: cap must be >= 1");
  std::vector<SampleRecord> sorted(records.begin(), records.end());
  sort_records(sorted);
  std::vector<SampleRecord> out;
  out.reserve(sorted.size());
  for (std::size_t begin = 0; begin < sorted.size();) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end].speaker_id == sorted[begin].speaker_id) ++end;
    const std::size_t n = end - begin;
    if (n <= cap) {
      out.insert(out.end(), sorted.begin() + static_cast<std::ptrdiff_t>(begin),
                 sorted.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
      // Each speaker draws from its own stream, so the choice does not
      // depend on which other speakers are present.
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = begin + i;
      Rng rng(derive_seed(seed, "cap:" + sorted[begin].speaker_id));
      rng.shuffle(idx);
      idx.resize(cap);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) out.push_back(sorted[i]);
    }
    begin = end;
  }
  return out;
}

SpeakerSelection balanced_select(std::span<const SampleRecord> records,
                                 std::size_t max_speakers_per_cell,
                                 std::size_t test_speakers_per_cell, std::uint64_t seed) {
  if (max_speakers_per_cell < 1 || test_speakers_per_cell < 1)
    throw std::invalid_argument("balanced_select: per-cell limits must be >= 1");
  std::map<Cell, std::set<std::string>> cells;
  for (const auto& r : records) cells[{r.age_years / 10, r.gender}].insert(r.speaker_id);
  SpeakerSelection sel;
  for (const auto& [cell, members] : cells) {
    std::vector<std::string> spk(members.begin(), members.end());
    Rng rng(derive_seed(seed, "cell:" + std::to_string(cell.decade) + ":" +
                                  std::string(to_string(cell.gender))));
    rng.shuffle(spk);
    const std::size_t chosen = std::min(max_speakers_per_cell, spk.size());
    const std::size_t to_test = std::min(test_speakers_per_cell, chosen);
    sel.test.insert(sel.test.end(), spk.begin(), spk.begin() + static_cast<std::ptrdiff_t>(to_test));
    sel.train_pool.insert(sel.train_pool.end(), spk.begin() + static_cast<std::ptrdiff_t>(to_test),
                          spk.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  std::sort(sel.test.begin(), sel.test.end());
  std::sort(sel.train_pool.begin(), sel.train_pool.end());
  return sel;
}

DevSplit split_dev(std::span<const std::string> speakers, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
    throw std::invalid_argument("split_dev: dev_fraction must be in (0, 1)");
  std::vector<std::string> spk(speakers.begin(), speakers.end());
  std::sort(spk.begin(), spk.end());
  spk.erase(std::unique(spk.begin(), spk.end()), spk.end());
  const std::size_t n = spk.size();
  if (n < 2) throw std::invalid_argument("split_dev: needs at least 2 speakers, got " + std::to_string(n));
  auto n_dev = static_cast<std::size_t>(std::floor(dev_fraction * static_cast<double>(n) + 0.5));
  n_dev = std::clamp<std::size_t>(n_dev, 1, n - 1);
  Rng rng(derive_seed(seed, "dev"));
  rng.shuffle(spk);
  DevSplit out;
  out.devel.assign(spk.begin(), spk.begin() + static_cast<std::ptrdiff_t>(n_dev));
  out.train.assign(spk.begin() + static_cast<std::ptrdiff_t>(n_dev), spk.end());
  std::sort(out.devel.begin(), out.devel.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

SplitManifest assemble_splits(std::span<const SampleRecord> records,
                              std::span<const std::string> train_speakers,
                              std::span<const std::string> devel_speakers,
                              std::span<const std::string> test_speakers) {
  std::map<std::string, int> where;
  auto mark = [&where](std::span<const std::string> s, int split) {
    for (const auto& id : s) {
      auto [it, fresh] = where.emplace(id, split);
      if (!fresh && it->second != split)
        throw std::invalid_argument("speaker '" + id + "' assigned to more than one split");
    }
  };
  mark(train_speakers, 0);
  mark(devel_speakers, 1);
  mark(test_speakers, 2);
  SplitManifest m;
  for (const auto& r : records) {
    auto it = where.find(r.speaker_id);
    if (it == where.end()) continue;
    (it->second == 0 ? m.train : it->second == 1 ? m.devel : m.test).push_back(r);
  }
  sort_records(m.train);
  sort_records(m.devel);
  sort_records(m.test);
  return m;
}

SplitManifest curate(std::span<const SampleRecord> records, const CurationParams& params,
                     std::uint64_t seed) {
  const auto capped = cap_per_speaker(records, params.cap, derive_seed(seed, "curation.cap"));
  const auto sel = balanced_select(capped, params.cell_max, params.cell_test,
                                   derive_seed(seed, "curation.balance"));
  const auto dev = split_dev(sel.train_pool, params.dev_fraction, derive_seed(seed, "curation.dev"));
  return assemble_splits(capped, dev.train, dev.devel, sel.test);
}

SplitCounts count_split(std::span<const SampleRecord> records) {
  std::set<std::string> spk;
  for (const auto& r : records) spk.insert(speaker_key(r));
  return {records.size(), spk.size()};
}

std::string format_counts(const SplitCounts& c) {
  return std::to_string(c.samples) + " (" + std::to_string(c.speakers) + ")";
}

std::vector<SummaryRow> summarize(const SplitManifest& manifest) {
  std::set<std::string> datasets;
  for (const auto* split : {&manifest.train, &manifest.devel, &manifest.test})
    for (const auto& r : *split) datasets.insert(r.dataset);
  auto subset = [](const std::vector<SampleRecord>& v, const std::string& ds) {
    std::vector<SampleRecord> out;
    for (const auto& r : v)
      if (r.dataset == ds) out.push_back(r);
    return out;
  };
  std::vector<SummaryRow> rows;
  for (const auto& ds : datasets)
    rows.push_back({ds, count_split(subset(manifest.train, ds)), count_split(subset(manifest.devel, ds)),
                    count_split(subset(manifest.test, ds))});
  rows.push_back({"all", count_split(manifest.train), count_split(manifest.devel), count_split(manifest.test)});
  return rows;
}

std::string summary_text(const SplitManifest& manifest) {
  std::ostringstream os;
  os << "dataset: train / devel / test\n";
  for (const auto& r : summarize(manifest))
    os << r.dataset << ": " << format_counts(r.train) << " / " << format_counts(r.devel) << " / "
       << format_counts(r.test) << '\n';
  return os.str();
}

std::vector<SummaryRow> parse_summary(std::istream& in) {
  std::vector<SummaryRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  auto counts = [&lineno](std::string_view s) {
    SplitCounts c;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    const auto open = s.find(" (");
    if (open == std::string_view::npos || s.back() != ')' ||
        !parse_number(s.substr(0, open), c.samples) ||
        !parse_number(s.substr(open + 2, s.size() - open - 3), c.speakers))
      throw DataError("summary", lineno, "malformed count '" + std::string(s) + "'");
    return c;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw DataError("summary", lineno, "missing ': '");
    const auto parts = split_fields(std::string_view(line).substr(colon + 2), '/');
    if (parts.size() != 3) throw DataError("summary", lineno, "expected three splits");
    rows.push_back({line.substr(0, colon), counts(parts[0]), counts(parts[1]), counts(parts[2])});
  }
  return rows;
}

void emit_split_lists(const SplitManifest& manifest, const std::filesystem::path& out_dir,
                      const std::string& provenance) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  auto open = [&out_dir](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + (out_dir / name).string() + "'");
    return f;
  };
  const std::pair<const char*, const std::vector<SampleRecord>*> splits[] = {
      {"train.csv", &manifest.train}, {"devel.csv", &manifest.devel}, {"test.csv", &manifest.test}};
  for (const auto& [name, records] : splits) {
    auto f = open(name);
    if (!provenance.empty()) f << "# " << provenance << '\n';
    write_manifest(f, *records);
    if (!f) throw std::runtime_error("write failed for '" + (out_dir / name).string() + "'");
  }
  auto f = open("summary.txt");
  if (!provenance.empty()) f << "# " << provenance << '\n';
  f << summary_text(manifest);
  if (!f) throw std::runtime_error("write failed for summary.txt");
}

}  // namespace agm
