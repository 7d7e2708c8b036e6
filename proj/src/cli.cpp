#include "agm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "agm/checkpoint.hpp"
#include "agm/config_io.hpp"
#include "agm/cost.hpp"
#include "agm/errors.hpp"
#include "agm/experiments.hpp"
#include "agm/kernels.hpp"
#include "agm/rng.hpp"
#include "agm/vad.hpp"
#include "agm/wav.hpp"

namespace agm {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string commented(const std::string& provenance, const std::string& body) {
  return "# " + provenance + "\n" + body;
}

std::vector<SampleRecord> require_manifest(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("manifest '" + path + "' does not exist");
  return load_manifest(path);
}

fs::path audio_base(const std::string& audio_dir, const std::string& manifest) {
  if (!audio_dir.empty()) return audio_dir;
  return fs::path(manifest).parent_path();
}

double mean_duration(std::span<const Utterance> us, std::size_t sample_rate) {
  double total = 0.0;
  for (const auto& u : us) total += static_cast<double>(u.waveform.size());
  return us.empty() ? 0.0 : total / static_cast<double>(us.size()) / static_cast<double>(sample_rate);
}

void add_cost_extras(EvalReport& report, const ModelConfig& config, double duration_s) {
  report.extras["layers"] = static_cast<double>(config.num_layers);
  report.extras["params"] = static_cast<double>(count_params(config).total_params);
  if (duration_s * static_cast<double>(config.sample_rate) >= static_cast<double>(config.min_samples())) {
    report.extras["macs"] = static_cast<double>(count_macs(config, duration_s).total_macs);
    report.extras["macs_duration_s"] = duration_s;
  }
}

// --threads wins over the config's `threads`.
void apply_threads(const RunConfig& rc, const std::optional<int>& flag) {
  kernels::set_num_threads(flag.value_or(static_cast<int>(rc.threads)));
}

void write_report(const fs::path& stem, const EvalReport& report, const std::string& provenance) {
  write_text(stem.string() + ".txt", commented(provenance, report.to_key_value()));
  write_text(stem.string() + ".csv", commented(provenance, report.to_csv()));
}

// ---- curate ------------------------------------------------------------------

struct CurateArgs {
  std::string manifest, out, config, audio_dir;
  std::optional<std::size_t> cap, cell_max, cell_test;
  std::optional<double> dev_frac;
  std::optional<std::uint64_t> seed;
  bool segment = false;
};

int cmd_curate(const CurateArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed) rc.seed = *a.seed;
  if (a.cap) rc.curation.cap = *a.cap;
  if (a.cell_max) rc.curation.cell_max = *a.cell_max;
  if (a.cell_test) rc.curation.cell_test = *a.cell_test;
  if (a.dev_frac) rc.curation.dev_fraction = *a.dev_frac;
  std::vector<std::string> issues;
  if (rc.curation.cap < 1) issues.push_back("--cap must be >= 1");
  if (rc.curation.cell_max < 1) issues.push_back("--cell-max must be >= 1");
  if (rc.curation.cell_test < 1) issues.push_back("--cell-test must be >= 1");
  if (!(rc.curation.dev_fraction > 0.0 && rc.curation.dev_fraction < 1.0))
    issues.push_back("--dev-frac must be in (0, 1)");
  if (!issues.empty()) throw ConfigError(std::move(issues));

  std::vector<SampleRecord> records = require_manifest(a.manifest);
  if (a.segment) {
    const fs::path base = audio_base(a.audio_dir, a.manifest);
    std::vector<SampleRecord> segments;
    for (const auto& r : records) {
      const Audio audio = read_wav(fs::path(r.file_path).is_absolute() ? fs::path(r.file_path) : base / r.file_path);
      auto segs = segment_record(r, audio.samples, audio.sample_rate, rc.vad);
      segments.insert(segments.end(), segs.begin(), segs.end());
    }
    records = std::move(segments);
  }
  const SplitManifest m = curate(records, rc.curation, rc.seed);
  emit_split_lists(m, a.out, provenance(rc, "command=curate manifest=" + hex64(fnv1a64(read_bytes(a.manifest)))));
  out << summary_text(m);
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::optional<std::size_t> layers, epochs;
  std::optional<std::uint64_t> seed;
};

CorpusSplits load_splits(const RunConfig& rc, const fs::path& out_dir) {
  if (!rc.data.train.empty()) {
    if (rc.data.devel.empty()) throw UsageError("data.devel is required when data.train is set");
    auto load = [&](const std::string& manifest) {
      if (manifest.empty()) return std::vector<Utterance>{};
      auto records = require_manifest(manifest);
      SynthCorpus c = load_corpus(records, audio_base(rc.data.audio_dir, manifest));
      if (!c.utterances.empty() && c.sample_rate != rc.model.sample_rate)
        throw UsageError("'" + manifest + "' audio is " + std::to_string(c.sample_rate) +
                         " Hz but model.sample_rate is " + std::to_string(rc.model.sample_rate));
      return std::move(c.utterances);
    };
    return {load(rc.data.train), load(rc.data.devel), load(rc.data.test)};
  }
  if (!rc.synth) throw UsageError("config names no data: set data.train/devel or a synth corpus");
  SynthSpec spec = *rc.synth;
  spec.seed = derive_seed(rc.seed, "synth");
  const SynthCorpus corpus = generate_synth_corpus(spec);
  const CorpusSplits splits = split_corpus(corpus, rc.curation, derive_seed(rc.seed, "curation"));
  // Keep the audio and split lists so `agm eval` can be pointed at them.
  write_corpus(corpus, out_dir / "data");
  SplitManifest m;
  for (const auto& u : splits.train) m.train.push_back(u.record);
  for (const auto& u : splits.devel) m.devel.push_back(u.record);
  for (const auto& u : splits.test) m.test.push_back(u.record);
  emit_split_lists(m, out_dir / "data", provenance(rc, "command=train"));
  return splits;
}

int cmd_train(const TrainArgs& a, const std::optional<int>& threads, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.seed = *a.seed;
  if (a.layers) rc.model.num_layers = *a.layers;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (!a.out.empty()) rc.output_dir = a.out;
  rc.validate();
  apply_threads(rc, threads);

  const fs::path out_dir = rc.output_dir;
  fs::create_directories(out_dir);
  const CorpusSplits splits = load_splits(rc, out_dir);
  if (splits.train.empty() || splits.devel.empty()) throw UsageError("train and devel splits must be non-empty");

  Model model = build_model(rc.model, derive_seed(rc.seed, "model"));
  const ExampleSplits data = featurize(model, splits);
  TrainConfig tc = rc.train;
  tc.seed = derive_seed(rc.seed, "train");
  TrainResult result = train(std::move(model), data.train, data.devel, tc);

  const std::string prov = provenance(rc, "command=train layers=" + std::to_string(rc.model.num_layers));
  write_text(out_dir / "config.json", to_json(rc).dump(2) + "\n");
  write_text(out_dir / "history.csv", history_csv(result.history, prov));
  save_checkpoint(out_dir / "model.ckpt", result.best,
                  TrainingState{result.best_epoch, result.best_dev_score, result.state});
  out << "selected epoch " << result.best_epoch << " (dev score " << format_number(result.best_dev_score)
      << ")\n";
  if (!data.test.empty()) {
    EvalReport report = evaluate_model(result.best, data.test);
    add_cost_extras(report, result.best.config(), mean_duration(splits.test, rc.model.sample_rate));
    write_report(out_dir / "test_report", report, prov);
    out << report.to_key_value();
  }
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, split, audio_dir, out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto records = require_manifest(a.split);
  if (records.empty()) throw UsageError("split '" + a.split + "' has no samples");
  const SynthCorpus corpus = load_corpus(records, audio_base(a.audio_dir, a.split));
  const ModelConfig& mc = ck.model.config();
  if (corpus.sample_rate != mc.sample_rate)
    throw UsageError("split audio is " + std::to_string(corpus.sample_rate) + " Hz but the checkpoint expects " +
                     std::to_string(mc.sample_rate) + " Hz");
  for (const auto& u : corpus.utterances)
    if (u.waveform.size() < mc.min_samples())
      throw UsageError("'" + u.record.file_path + "' is shorter than the model's minimum of " +
                       std::to_string(mc.min_samples()) + " samples");

  const auto examples = prepare_examples(ck.model, corpus.utterances);
  EvalReport report = evaluate_model(ck.model, examples);
  add_cost_extras(report, mc, mean_duration(corpus.utterances, corpus.sample_rate));

  const std::string prov = "agm " + std::string(library_version()) + " command=eval checkpoint=" +
                           hex64(fnv1a64(read_bytes(a.checkpoint))) + " split=" +
                           hex64(fnv1a64(read_bytes(a.split)));
  const fs::path out_dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  write_report(out_dir / (fs::path(a.split).stem().string() + "_report"), report, prov);
  out << report.to_key_value();
  return kExitOk;
}

// ---- cost --------------------------------------------------------------------

struct CostArgs {
  std::string config, preset;
  double duration = 3.0;
  std::optional<std::size_t> layers;
};

int cmd_cost(const CostArgs& a, std::ostream& out) {
  if (a.config.empty() == a.preset.empty()) throw UsageError("give exactly one of --config or --preset");
  ModelConfig mc;
  if (!a.config.empty()) mc = load_run_config(a.config).model;
  else if (a.preset == "paper") mc = ModelConfig::paper_scale();
  else if (a.preset == "toy") mc = ModelConfig::toy();
  else throw UsageError("--preset must be 'paper' or 'toy'");
  if (a.layers) {
    if (*a.layers < 1 || *a.layers > mc.num_layers)
      throw UsageError("--layers must be in [1, " + std::to_string(mc.num_layers) + "]");
    mc.num_layers = *a.layers;
  }
  if (!(a.duration > 0.0) || !std::isfinite(a.duration))
    throw UsageError("--duration must be a positive number of seconds");
  const double min_s = static_cast<double>(mc.min_samples()) / static_cast<double>(mc.sample_rate);
  if (a.duration < min_s)
    throw UsageError("--duration must be at least " + format_number(min_s) + " s for this model");
  out << count_macs(mc, a.duration).to_text();
  return kExitOk;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string config, out, dataset;
  std::optional<std::size_t> speakers, samples;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  SynthSpec spec = rc.synth.value_or(SynthSpec{});
  if (a.seed) rc.seed = *a.seed;
  if (a.speakers) spec.speakers_per_cell = *a.speakers;
  if (a.samples) spec.samples_per_speaker = *a.samples;
  if (!a.dataset.empty()) spec.dataset = a.dataset;
  spec.seed = derive_seed(rc.seed, "synth");
  spec.validate();
  const SynthCorpus corpus = generate_synth_corpus(spec);
  write_corpus(corpus, a.out);
  out << "wrote " << corpus.utterances.size() << " utterances to " << a.out << "\n";
  return kExitOk;
}

// ---- experiment ----------------------------------------------------------------

struct ExperimentArgs {
  std::string config, kind, out;
  std::optional<std::uint64_t> seed;
};

int cmd_experiment(const ExperimentArgs& a, const std::optional<int>& threads, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.seed = *a.seed;
  if (!a.kind.empty()) rc.experiment = a.kind;
  if (!a.out.empty()) rc.output_dir = a.out;
  rc.validate();
  apply_threads(rc, threads);
  const ExperimentReport report = run_experiment(rc);
  write_text(fs::path(rc.output_dir) / (report.kind + ".csv"),
             report.to_csv(provenance(rc, "command=experiment")));
  out << report.to_table();
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age and gender estimation from speech: curation, training, evaluation, cost accounting."};
  app.name("agm");
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads for the kernels (default: config value or 1; results do not depend on it)")
      ->check(CLI::PositiveNumber);

  CurateArgs ca;
  auto* curate = app.add_subcommand("curate", "Cap, balance and split a manifest into train/devel/test lists");
  curate->add_option("--manifest", ca.manifest, "Input manifest CSV")->required();
  curate->add_option("--out", ca.out, "Output directory")->required();
  curate->add_option("--config", ca.config, "Run config supplying curation/VAD defaults");
  curate->add_option("--cap", ca.cap, "Maximum samples per speaker");
  curate->add_option("--cell-max", ca.cell_max, "Maximum speakers per (decade, gender) cell");
  curate->add_option("--cell-test", ca.cell_test, "Test speakers per cell");
  curate->add_option("--dev-frac", ca.dev_frac, "Fraction of training speakers held out as devel");
  curate->add_option("--seed", ca.seed, "Seed (default 42)");
  curate->add_flag("--segment", ca.segment, "Split recordings into VAD segments before capping");
  curate->add_option("--audio-dir", ca.audio_dir, "Base directory for relative audio paths");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train from a run config; writes checkpoint, history and test report");
  train_cmd->add_option("config", ta.config, "Run config (JSON)")->required();
  train_cmd->add_option("--layers", ta.layers, "Override model.num_layers");
  train_cmd->add_option("--epochs", ta.epochs, "Override train.epochs");
  train_cmd->add_option("--seed", ta.seed, "Override the config seed");
  train_cmd->add_option("--out", ta.out, "Override output_dir");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split list");
  eval_cmd->add_option("checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("split", ea.split, "Split manifest CSV")->required();
  eval_cmd->add_option("--audio-dir", ea.audio_dir, "Base directory for relative audio paths");
  eval_cmd->add_option("--out", ea.out, "Output directory for the report files");

  CostArgs co;
  auto* cost = app.add_subcommand("cost", "Parameter and MAC counts");
  cost->add_option("--config", co.config, "Run config whose model section is counted");
  cost->add_option("--preset", co.preset, "paper or toy");
  cost->add_option("--duration", co.duration, "Input length in seconds (default 3)");
  cost->add_option("--layers", co.layers, "Count only the bottom N transformer layers");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus (WAVs + manifest.csv)");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--config", sa.config, "Run config whose synth section is used");
  synth->add_option("--speakers-per-cell", sa.speakers, "Speakers per (decade, gender) cell");
  synth->add_option("--samples-per-speaker", sa.samples, "Utterances per speaker");
  synth->add_option("--dataset", sa.dataset, "Dataset name written to the manifest");
  synth->add_option("--seed", sa.seed, "Override the config seed");

  ExperimentArgs xa;
  auto* exp = app.add_subcommand("experiment", "Run combined_vs_single, layer_sweep or cross_corpus");
  exp->add_option("config", xa.config, "Run config (JSON)")->required();
  exp->add_option("--kind", xa.kind, "Override the config's experiment");
  exp->add_option("--seed", xa.seed, "Override the config seed");
  exp->add_option("--out", xa.out, "Override output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    kernels::set_num_threads(threads.value_or(1));
    if (*curate) return cmd_curate(ca, out);
    if (*train_cmd) return cmd_train(ta, threads, out);
    if (*eval_cmd) return cmd_eval(ea, out);
    if (*cost) return cmd_cost(co, out);
    if (*synth) return cmd_synth(sa, out);
    if (*exp) return cmd_experiment(xa, threads, out);
  } catch (const ConfigError& e) {
    err << "agm: invalid configuration:\n";
    for (const auto& i : e.issues()) err << "  - " << i << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "agm: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "agm: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "agm: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace agm
