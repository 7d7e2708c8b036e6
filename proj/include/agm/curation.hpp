#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "agm/labels.hpp"

namespace agm {

/// One audio sample's metadata, as listed in a manifest.
struct SampleRecord {
  std::string file_path;
  std::string speaker_id;
  int age_years = 0;
  Gender gender = Gender::female;
  std::string dataset;
  double duration_s = 0.0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SplitManifest {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> devel;
  std::vector<SampleRecord> test;
};

inline constexpr const char* kManifestHeader = "file_path,speaker_id,age_years,gender,dataset,duration_s";

/// Parses and validates a manifest: the exact header, six comma-separated
/// fields per row, ages 0..100, gender tokens child/female/male, positive
/// durations, unique paths, and constant age/gender per speaker within a
/// dataset. Lines starting with '#' and blank lines are skipped. Errors
/// are DataError with the offending line number.
std::vector<SampleRecord> parse_manifest(std::istream& in, const std::string& source);
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);

void write_manifest(std::ostream& out, std::span<const SampleRecord> records);

/// Sorts by (speaker_id, file_path), the canonical emission order.
void sort_records(std::vector<SampleRecord>& records);

/// Keeps a seeded uniform subset of `cap` samples for every speaker above
/// the cap; speakers at or below it are untouched. Output is in canonical
/// order.
std::vector<SampleRecord> cap_per_speaker(std::span<const SampleRecord> records, std::size_t cap,
                                          std::uint64_t seed);

struct SpeakerSelection {
  std::vector<std::string> test;
  std::vector<std::string> train_pool;
};

/// Balancing cell of a speaker: (floor(age / 10), gender).
struct Cell {
  int decade = 0;
  Gender gender = Gender::female;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Per (decade, gender) cell: a seeded sample of at most
/// `max_speakers_per_cell` speakers, of which up to `test_speakers_per_cell`
/// go to test and the rest to the training pool. Speakers outside the
/// sample are dropped.
SpeakerSelection balanced_select(std::span<const SampleRecord> records,
                                 std::size_t max_speakers_per_cell,
                                 std::size_t test_speakers_per_cell, std::uint64_t seed);

struct DevSplit {
  std::vector<std::string> train;
  std::vector<std::string> devel;
};

/// Seeded speaker-level split. Devel size is round-half-up(fraction * n),
/// at least 1 and at most n - 1.
DevSplit split_dev(std::span<const std::string> speakers, double dev_fraction, std::uint64_t seed);

/// Distributes records to splits by speaker membership; records of
/// unlisted speakers are dropped.
SplitManifest assemble_splits(std::span<const SampleRecord> records,
                              std::span<const std::string> train_speakers,
                              std::span<const std::string> devel_speakers,
                              std::span<const std::string> test_speakers);

struct CurationParams {
  std::size_t cap = 20;
  std::size_t cell_max = 20;
  std::size_t cell_test = 7;
  double dev_fraction = 0.1;
};

/// cap -> balanced selection -> dev split -> assembly. Subsystem seeds are
/// derived from `seed` by name.
SplitManifest curate(std::span<const SampleRecord> records, const CurationParams& params,
                     std::uint64_t seed);

struct SplitCounts {
  std::size_t samples = 0;
  std::size_t speakers = 0;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};
SplitCounts count_split(std::span<const SampleRecord> records);

/// "29553 (324)" style: #samples and #speakers in parenthesis.
std::string format_counts(const SplitCounts& c);

/// Per-dataset and overall rows of "<train> / <devel> / <test>" counts.
struct SummaryRow {
  std::string dataset;
  SplitCounts train, devel, test;
};
std::vector<SummaryRow> summarize(const SplitManifest& manifest);
std::string summary_text(const SplitManifest& manifest);
/// Inverse of summary_text (comment lines ignored).
std::vector<SummaryRow> parse_summary(std::istream& in);

/// Writes train.csv, devel.csv, test.csv and summary.txt into `out_dir`.
/// `provenance` (if non-empty) becomes a leading '#' line of each file.
void emit_split_lists(const SplitManifest& manifest, const std::filesystem::path& out_dir,
                      const std::string& provenance = {});

}  // namespace agm
