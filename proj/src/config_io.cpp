#include "agm/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "agm/errors.hpp"
#include "agm/rng.hpp"

namespace agm {

using nlohmann::json;

std::string_view library_version() { return "0.1.0"; }

// ---- writers -----------------------------------------------------------------

json to_json(const ModelConfig& c) {
  json conv = json::array();
  for (const auto& l : c.conv_stage)
    conv.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  return {{"num_layers", c.num_layers},     {"hidden_dim", c.hidden_dim},
          {"ffn_dim", c.ffn_dim},           {"num_heads", c.num_heads},
          {"head_hidden", c.head_hidden},   {"dropout_rate", c.dropout_rate},
          {"conv_stage", conv},             {"pos_conv_kernel", c.pos_conv_kernel},
          {"pos_conv_groups", c.pos_conv_groups}, {"sample_rate", c.sample_rate},
          {"layer_norm_eps", c.layer_norm_eps},   {"age_head", c.age_head},
          {"gender_head", c.gender_head}};
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"selection_metric", std::string(to_string(c.selection_metric))},
          {"clip_grad_norm", c.clip_grad_norm}};
}

json to_json(const VadConfig& c) {
  return {{"frame_ms", c.frame_ms},
          {"hop_ms", c.hop_ms},
          {"energy_threshold_db", c.energy_threshold_db},
          {"absolute_floor_db", c.absolute_floor_db},
          {"min_segment_s", c.min_segment_s},
          {"max_segment_s", c.max_segment_s}};
}

json to_json(const CurationParams& c) {
  return {{"cap", c.cap}, {"cell_max", c.cell_max}, {"cell_test", c.cell_test}, {"dev_fraction", c.dev_fraction}};
}

json to_json(const SynthSpec& c) {
  json genders = json::array();
  for (auto g : c.genders) genders.push_back(std::string(to_string(g)));
  return {{"decades", c.decades},
          {"genders", genders},
          {"speakers_per_cell", c.speakers_per_cell},
          {"samples_per_speaker", c.samples_per_speaker},
          {"min_duration_s", c.min_duration_s},
          {"max_duration_s", c.max_duration_s},
          {"sample_rate", c.sample_rate},
          {"noise_level", c.noise_level},
          {"f0_scale", c.f0_scale},
          {"tilt_offset", c.tilt_offset},
          {"dataset", c.dataset}};
}

json to_json(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"threads", c.threads},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"vad", to_json(c.vad)},
            {"curation", to_json(c.curation)},
            {"data",
             {{"train", c.data.train}, {"devel", c.data.devel}, {"test", c.data.test}, {"audio_dir", c.data.audio_dir}}},
            {"output_dir", c.output_dir},
            {"experiment", c.experiment},
            {"layer_counts", c.layer_counts},
            {"sweep_seeds", c.sweep_seeds}};
  if (c.synth) j["synth"] = to_json(*c.synth);
  if (c.synth_shifted) j["synth_shifted"] = to_json(*c.synth_shifted);
  return j;
}

// ---- strict readers ------------------------------------------------------------

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields are read as size_t");

/// Reads one JSON object, recording type errors and unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) issues_.push_back(where() + " must be an object");
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  void get(const char* key, std::size_t& out) {
    if (auto* v = take(key)) {
      if (v->is_number_unsigned()) out = v->get<std::size_t>();
      else issue(key, "must be a non-negative integer");
    }
  }
  void get(const char* key, double& out) {
    if (auto* v = take(key)) {
      if (v->is_number()) out = v->get<double>();
      else issue(key, "must be a number");
    }
  }
  void get(const char* key, bool& out) {
    if (auto* v = take(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else issue(key, "must be true or false");
    }
  }
  void get(const char* key, std::string& out) {
    if (auto* v = take(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else issue(key, "must be a string");
    }
  }
  const json* take(const char* key) {
    seen_.insert(key);
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }
  void issue(const char* key, const std::string& what) { issues_.push_back(where() + key + " " + what); }
  std::string child_path(const char* key) const { return path_ + key + "."; }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) issues_.push_back("unknown key '" + path_ + k + "'");
  }

 private:
  std::string where() const { return path_.empty() ? std::string("config") : path_; }

  const json& j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

template <class Fn>
void validated(std::vector<std::string>& issues, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
}

ModelConfig read_model(const json& j, const std::string& path, std::vector<std::string>& issues) {
  ModelConfig c = ModelConfig::toy();
  Reader r(j, path, issues);
  r.get("num_layers", c.num_layers);
  r.get("hidden_dim", c.hidden_dim);
  r.get("ffn_dim", c.ffn_dim);
  r.get("num_heads", c.num_heads);
  r.get("head_hidden", c.head_hidden);
  r.get("dropout_rate", c.dropout_rate);
  if (const json* conv = r.take("conv_stage")) {
    if (!conv->is_array()) {
      r.issue("conv_stage", "must be an array of {channels, kernel, stride}");
    } else {
      c.conv_stage.clear();
      for (std::size_t i = 0; i < conv->size(); ++i) {
        ConvLayerSpec l;
        Reader lr((*conv)[i], path + "conv_stage[" + std::to_string(i) + "].", issues);
        lr.get("channels", l.channels);
        lr.get("kernel", l.kernel);
        lr.get("stride", l.stride);
        lr.finish();
        c.conv_stage.push_back(l);
      }
    }
  }
  r.get("pos_conv_kernel", c.pos_conv_kernel);
  r.get("pos_conv_groups", c.pos_conv_groups);
  r.get("sample_rate", c.sample_rate);
  r.get("layer_norm_eps", c.layer_norm_eps);
  r.get("age_head", c.age_head);
  r.get("gender_head", c.gender_head);
  r.finish();
  return c;
}

TrainConfig read_train(const json& j, std::vector<std::string>& issues) {
  TrainConfig c;
  Reader r(j, "train.", issues);
  r.get("learning_rate", c.learning_rate);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  std::string metric(to_string(c.selection_metric));
  r.get("selection_metric", metric);
  if (auto m = parse_selection_metric(metric)) c.selection_metric = *m;
  else r.issue("selection_metric", "must be one of dev_combined, dev_ccc, dev_uar");
  r.get("clip_grad_norm", c.clip_grad_norm);
  r.finish();
  return c;
}

VadConfig read_vad(const json& j, std::vector<std::string>& issues) {
  VadConfig c;
  Reader r(j, "vad.", issues);
  r.get("frame_ms", c.frame_ms);
  r.get("hop_ms", c.hop_ms);
  r.get("energy_threshold_db", c.energy_threshold_db);
  r.get("absolute_floor_db", c.absolute_floor_db);
  r.get("min_segment_s", c.min_segment_s);
  r.get("max_segment_s", c.max_segment_s);
  r.finish();
  return c;
}

CurationParams read_curation(const json& j, std::vector<std::string>& issues) {
  CurationParams c;
  Reader r(j, "curation.", issues);
  r.get("cap", c.cap);
  r.get("cell_max", c.cell_max);
  r.get("cell_test", c.cell_test);
  r.get("dev_fraction", c.dev_fraction);
  r.finish();
  if (c.cap < 1) issues.push_back("curation.cap must be >= 1");
  if (c.cell_max < 1) issues.push_back("curation.cell_max must be >= 1");
  if (c.cell_test < 1) issues.push_back("curation.cell_test must be >= 1");
  if (!(c.dev_fraction > 0.0 && c.dev_fraction < 1.0)) issues.push_back("curation.dev_fraction must be in (0, 1)");
  return c;
}

SynthSpec read_synth(const json& j, const std::string& path, std::vector<std::string>& issues) {
  SynthSpec c;
  Reader r(j, path, issues);
  if (const json* d = r.take("decades")) {
    c.decades.clear();
    if (!d->is_array()) r.issue("decades", "must be an array of integers");
    else
      for (const auto& v : *d) {
        if (v.is_number_integer()) c.decades.push_back(v.get<int>());
        else r.issue("decades", "must contain integers only");
      }
  }
  if (const json* g = r.take("genders")) {
    c.genders.clear();
    if (!g->is_array()) r.issue("genders", "must be an array of gender names");
    else
      for (const auto& v : *g) {
        auto parsed = v.is_string() ? parse_gender(v.get<std::string>()) : std::nullopt;
        if (parsed) c.genders.push_back(*parsed);
        else r.issue("genders", "entries must be child, female or male");
      }
  }
  r.get("speakers_per_cell", c.speakers_per_cell);
  r.get("samples_per_speaker", c.samples_per_speaker);
  r.get("min_duration_s", c.min_duration_s);
  r.get("max_duration_s", c.max_duration_s);
  r.get("sample_rate", c.sample_rate);
  r.get("noise_level", c.noise_level);
  r.get("f0_scale", c.f0_scale);
  r.get("tilt_offset", c.tilt_offset);
  r.get("dataset", c.dataset);
  r.finish();
  validated(issues, [&] { c.validate(); });
  return c;
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  std::vector<std::string> issues;
  ModelConfig c = read_model(j, "model.", issues);
  validated(issues, [&] { c.validate(); });
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

void RunConfig::validate() const {
  std::vector<std::string> issues;
  validated(issues, [&] { model.validate(); });
  validated(issues, [&] { train.validate(); });
  validated(issues, [&] { vad.validate(); });
  if (synth) validated(issues, [&] { synth->validate(); });
  if (synth_shifted) validated(issues, [&] { synth_shifted->validate(); });
  if (threads < 1) issues.push_back("threads must be >= 1");
  if (sweep_seeds < 1) issues.push_back("sweep_seeds must be >= 1");
  if (!experiment.empty() && experiment != "combined_vs_single" && experiment != "layer_sweep" &&
      experiment != "cross_corpus")
    issues.push_back("experiment must be one of combined_vs_single, layer_sweep, cross_corpus");
  for (auto n : layer_counts)
    if (n < 1 || n > model.num_layers)
      issues.push_back("layer_counts entries must be in [1, model.num_layers]");
  if (synth && synth->sample_rate != model.sample_rate)
    issues.push_back("synth.sample_rate must equal model.sample_rate");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

RunConfig run_config_from_json(const json& j) {
  std::vector<std::string> issues;
  RunConfig c;
  Reader r(j, "", issues);
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  if (const json* m = r.take("model")) c.model = read_model(*m, "model.", issues);
  if (const json* t = r.take("train")) c.train = read_train(*t, issues);
  if (const json* v = r.take("vad")) c.vad = read_vad(*v, issues);
  if (const json* cu = r.take("curation")) c.curation = read_curation(*cu, issues);
  if (const json* d = r.take("data")) {
    Reader dr(*d, "data.", issues);
    dr.get("train", c.data.train);
    dr.get("devel", c.data.devel);
    dr.get("test", c.data.test);
    dr.get("audio_dir", c.data.audio_dir);
    dr.finish();
  }
  if (const json* s = r.take("synth")) c.synth = read_synth(*s, "synth.", issues);
  if (const json* s = r.take("synth_shifted")) c.synth_shifted = read_synth(*s, "synth_shifted.", issues);
  r.get("output_dir", c.output_dir);
  r.get("experiment", c.experiment);
  if (const json* l = r.take("layer_counts")) {
    if (!l->is_array()) r.issue("layer_counts", "must be an array of integers");
    else
      for (const auto& v : *l) {
        if (v.is_number_integer() && v.get<long long>() > 0) c.layer_counts.push_back(v.get<std::size_t>());
        else r.issue("layer_counts", "must contain positive integers");
      }
  }
  r.get("sweep_seeds", c.sweep_seeds);
  r.finish();
  // Re-validate the assembled document; reader issues come first.
  try {
    c.validate();
  } catch (const ConfigError& e) {
    for (const auto& i : e.issues())
      if (std::find(issues.begin(), issues.end(), i) == issues.end()) issues.push_back(i);
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"'" + path.string() + "' is not valid JSON: " + e.what()});
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

std::string provenance(const RunConfig& c, const std::string& extra) {
  std::string s = "agm " + std::string(library_version()) + " seed=" + std::to_string(c.seed) +
                  " config=" + config_hash(c);
  if (!extra.empty()) s += " " + extra;
  return s;
}

}  // namespace agm
