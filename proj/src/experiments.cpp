#include "agm/experiments.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "agm/cost.hpp"
#include "agm/errors.hpp"
#include "agm/rng.hpp"

namespace agm {

CorpusSplits split_corpus(const SynthCorpus& corpus, const CurationParams& params, std::uint64_t seed) {
  const auto records = corpus.records();
  const SplitManifest m = curate(records, params, seed);
  std::unordered_map<std::string, const Utterance*> by_path;
  for (const auto& u : corpus.utterances) by_path.emplace(u.record.file_path, &u);
  auto gather = [&](const std::vector<SampleRecord>& rs) {
    std::vector<Utterance> out;
    out.reserve(rs.size());
    for (const auto& r : rs) out.push_back(*by_path.at(r.file_path));
    return out;
  };
  return {gather(m.train), gather(m.devel), gather(m.test)};
}

ExampleSplits featurize(const Model& model, const CorpusSplits& splits) {
  return {prepare_examples(model, splits.train), prepare_examples(model, splits.devel),
          prepare_examples(model, splits.test)};
}

std::optional<double> ExperimentRow::metric(std::string_view name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  return std::nullopt;
}

const ExperimentRow* ExperimentReport::find(std::string_view condition, std::string_view seed,
                                            std::size_t layers) const {
  for (const auto& r : rows)
    if (r.condition == condition && (seed.empty() || r.seed == seed) && (layers == 0 || r.layers == layers))
      return &r;
  return nullptr;
}

std::string ExperimentReport::to_csv(const std::string& provenance) const {
  std::ostringstream out;
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "kind,condition,layers,seed,metric,value\n";
  for (const auto& r : rows)
    for (const auto& [k, v] : r.metrics)
      out << kind << ',' << r.condition << ',' << r.layers << ',' << r.seed << ',' << k << ','
          << format_number(v) << "\n";
  return out.str();
}

std::string ExperimentReport::to_table() const {
  std::ostringstream out;
  out << kind << "\n";
  for (const auto& r : rows) {
    out << "  " << r.condition << " layers=" << r.layers;
    if (!r.seed.empty()) out << " seed=" << r.seed;
    for (const auto& [k, v] : r.metrics) out << ' ' << k << '=' << format_number(v);
    out << "\n";
  }
  return out.str();
}

std::vector<std::size_t> default_layer_counts(std::size_t max_layers) {
  std::vector<std::size_t> out;
  for (std::size_t n : {std::size_t{1}, std::size_t{2}})
    if (n <= max_layers) out.push_back(n);
  for (std::size_t n = 4; n <= max_layers; n += 2) out.push_back(n);
  if (out.empty() || out.back() != max_layers) out.push_back(max_layers);
  return out;
}

namespace {

SynthCorpus make_corpus(const SynthSpec& spec, std::uint64_t seed, std::string_view name) {
  SynthSpec s = spec;
  s.seed = derive_seed(seed, name);
  return generate_synth_corpus(s);
}

const SynthSpec& require_synth(const RunConfig& c) {
  if (!c.synth) throw UsageError("experiment needs a 'synth' corpus in the config");
  return *c.synth;
}

TrainConfig seeded_train(const RunConfig& c, std::string_view name) {
  TrainConfig t = c.train;
  t.seed = derive_seed(c.seed, name);
  return t;
}

void add_optional(ExperimentRow& row, const char* name, std::optional<double> v) {
  if (v) row.metrics.emplace_back(name, *v);
}

ExperimentRow test_row(std::string condition, const Model& model, std::span<const Example> test) {
  const EvalReport r = evaluate_model(model, test);
  ExperimentRow row{std::move(condition), model.config().num_layers, {}, {}};
  add_optional(row, "mae_years", r.mae_years);
  add_optional(row, "ccc", r.ccc);
  add_optional(row, "gender_uar", r.gender_uar());
  add_optional(row, "age4_uar", r.age4_uar());
  return row;
}

double mean_duration(std::span<const Utterance> us, std::size_t sample_rate) {
  if (us.empty()) return 0.0;
  double total = 0.0;
  for (const auto& u : us) total += static_cast<double>(u.waveform.size());
  return total / static_cast<double>(us.size()) / static_cast<double>(sample_rate);
}

}  // namespace

ExperimentReport run_combined_vs_single(const RunConfig& c) {
  const SynthCorpus corpus = make_corpus(require_synth(c), c.seed, "synth");
  const CorpusSplits splits = split_corpus(corpus, c.curation, derive_seed(c.seed, "curation"));

  ModelConfig mc = c.model;
  mc.age_head = mc.gender_head = true;
  const Model base = build_model(mc, derive_seed(c.seed, "model"));
  const ExampleSplits data = featurize(base, splits);
  const TrainConfig tc = seeded_train(c, "train");

  ExperimentReport report{"combined_vs_single", {}};
  const std::pair<const char*, std::optional<Task>> conditions[] = {
      {"age_only", Task::gender}, {"gender_only", Task::age}, {"combined", std::nullopt}};
  for (const auto& [name, drop] : conditions) {
    Model m = drop ? detach_head(base, *drop) : base;
    TrainResult r = train(std::move(m), data.train, data.devel, tc);
    report.rows.push_back(test_row(name, r.best, data.test));
  }
  return report;
}

ExperimentReport run_layer_sweep(const RunConfig& c) {
  const SynthCorpus corpus = make_corpus(require_synth(c), c.seed, "synth");
  const CorpusSplits splits = split_corpus(corpus, c.curation, derive_seed(c.seed, "curation"));
  const auto counts = c.layer_counts.empty() ? default_layer_counts(c.model.num_layers) : c.layer_counts;
  const double duration = mean_duration(splits.test, c.model.sample_rate);

  ExperimentReport report{"layer_sweep", {}};
  std::vector<ExperimentRow> per_seed;
  for (std::size_t s = 0; s < c.sweep_seeds; ++s) {
    const std::string tag = std::to_string(s);
    const Model base = build_model(c.model, derive_seed(c.seed, "model#" + tag));
    const ExampleSplits data = featurize(base, splits);
    const TrainConfig tc = seeded_train(c, "train#" + tag);
    for (std::size_t n : counts) {
      TrainResult r = train(truncate_layers(base, n), data.train, data.devel, tc);
      ExperimentRow row = test_row("layers", r.best, data.test);
      row.seed = tag;
      const CostReport cost = count_macs(r.best.config(), duration);
      row.metrics.emplace_back("params", static_cast<double>(count_params(r.best.config()).total_params));
      row.metrics.emplace_back("macs", static_cast<double>(cost.total_macs));
      per_seed.push_back(std::move(row));
    }
  }
  report.rows = per_seed;
  // Averages over seeds, one row per layer count.
  for (std::size_t n : counts) {
    ExperimentRow mean{"layers", n, "mean", {}};
    std::vector<const ExperimentRow*> rs;
    for (const auto& r : per_seed)
      if (r.layers == n) rs.push_back(&r);
    for (const auto& [k, v] : rs.front()->metrics) {
      double sum = 0.0;
      for (const auto* r : rs) sum += r->metric(k).value_or(0.0);
      mean.metrics.emplace_back(k, sum / static_cast<double>(rs.size()));
    }
    report.rows.push_back(std::move(mean));
  }
  return report;
}

ExperimentReport run_cross_corpus(const RunConfig& c) {
  if (!c.synth_shifted) throw UsageError("cross_corpus needs a 'synth_shifted' corpus in the config");
  const SynthCorpus a = make_corpus(require_synth(c), c.seed, "synth");
  const SynthCorpus b = make_corpus(*c.synth_shifted, c.seed, "synth_shifted");
  if (a.sample_rate != b.sample_rate) throw UsageError("cross_corpus corpora must share a sample rate");
  const CorpusSplits sa = split_corpus(a, c.curation, derive_seed(c.seed, "curation.a"));
  const CorpusSplits sb = split_corpus(b, c.curation, derive_seed(c.seed, "curation.b"));

  const Model base = build_model(c.model, derive_seed(c.seed, "model"));
  const ExampleSplits da = featurize(base, sa);
  const ExampleSplits db = featurize(base, sb);
  const TrainConfig tc = seeded_train(c, "train");

  auto mean_age = [](std::span<const Example> xs) {
    double s = 0.0;
    for (const auto& x : xs) s += x.age_years;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
  };
  auto run = [&](const char* name, std::span<const Example> tr, std::span<const Example> dv) {
    TrainResult r = train(base, tr, dv, tc);
    ExperimentRow row = test_row(name, r.best, db.test);
    const auto preds = predict(r.best, db.test);
    double s = 0.0;
    for (const auto& p : preds) s += p.age_years();
    row.metrics.emplace_back("mean_pred_age", preds.empty() ? 0.0 : s / static_cast<double>(preds.size()));
    row.metrics.emplace_back("mean_true_age", mean_age(db.test));
    row.metrics.emplace_back("train_mean_age", mean_age(tr));
    return row;
  };

  ExperimentReport report{"cross_corpus", {}};
  report.rows.push_back(run("cross", da.train, da.devel));
  std::vector<Example> both_train = da.train, both_dev = da.devel;
  both_train.insert(both_train.end(), db.train.begin(), db.train.end());
  both_dev.insert(both_dev.end(), db.devel.begin(), db.devel.end());
  report.rows.push_back(run("in_domain", both_train, both_dev));
  return report;
}

ExperimentReport run_experiment(const RunConfig& c) {
  if (c.experiment == "combined_vs_single") return run_combined_vs_single(c);
  if (c.experiment == "layer_sweep") return run_layer_sweep(c);
  if (c.experiment == "cross_corpus") return run_cross_corpus(c);
  throw UsageError("no experiment selected (set 'experiment' in the config)");
}

}  // namespace agm
