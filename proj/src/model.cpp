#include "agm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "agm/errors.hpp"
#include "agm/rng.hpp"

namespace agm {

// ---- config ----------------------------------------------------------------

void ModelConfig::validate() const {
  std::vector<std::string> issues;
  if (num_layers < 1) issues.push_back("num_layers must be >= 1");
  if (hidden_dim < 1) issues.push_back("hidden_dim must be >= 1");
  if (ffn_dim < 1) issues.push_back("ffn_dim must be >= 1");
  if (head_hidden < 1) issues.push_back("head_hidden must be >= 1");
  if (num_heads < 1) {
    issues.push_back("num_heads must be >= 1");
  } else if (hidden_dim % num_heads != 0) {
    issues.push_back("num_heads (" + std::to_string(num_heads) + ") must divide hidden_dim (" +
                     std::to_string(hidden_dim) + ")");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) issues.push_back("dropout_rate must be in [0, 1)");
  if (conv_stage.empty()) issues.push_back("conv_stage needs at least one layer");
  for (std::size_t i = 0; i < conv_stage.size(); ++i) {
    const auto& c = conv_stage[i];
    if (c.channels < 1 || c.kernel < 1 || c.stride < 1)
      issues.push_back("conv_stage[" + std::to_string(i) + "]: channels, kernel and stride must be >= 1");
  }
  if (pos_conv_kernel < 1) issues.push_back("pos_conv_kernel must be >= 1");
  if (pos_conv_groups < 1 || hidden_dim % pos_conv_groups != 0)
    issues.push_back("pos_conv_groups (" + std::to_string(pos_conv_groups) +
                     ") must divide hidden_dim (" + std::to_string(hidden_dim) + ")");
  if (sample_rate < 1) issues.push_back("sample_rate must be >= 1");
  if (!(layer_norm_eps > 0.0)) issues.push_back("layer_norm_eps must be > 0");
  if (!age_head && !gender_head) issues.push_back("at least one of age_head/gender_head is required");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

std::size_t ModelConfig::frame_hop() const {
  std::size_t hop = 1;
  for (const auto& c : conv_stage) hop *= c.stride;
  return hop;
}

std::size_t ModelConfig::min_samples() const {
  // Walk back from one output frame: a layer emitting n frames reads
  // (n - 1) * stride + kernel inputs.
  std::size_t need = 1;
  for (auto it = conv_stage.rbegin(); it != conv_stage.rend(); ++it)
    need = (need - 1) * it->stride + it->kernel;
  return need;
}

std::size_t ModelConfig::frames_for(std::size_t samples) const {
  std::size_t len = samples;
  for (const auto& c : conv_stage) {
    if (len < c.kernel) return 0;
    len = (len - c.kernel) / c.stride + 1;
  }
  return len;
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.num_layers = 24;
  c.hidden_dim = 1024;
  c.ffn_dim = 4096;
  c.num_heads = 16;
  c.head_hidden = 1024;
  c.dropout_rate = 0.1;
  c.conv_stage = {{512, 10, 5}, {512, 3, 2}, {512, 3, 2}, {512, 3, 2},
                  {512, 3, 2},  {512, 2, 2}, {512, 2, 2}};
  c.pos_conv_kernel = 128;
  c.pos_conv_groups = 16;
  c.sample_rate = 16000;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_dim = 32;
  c.ffn_dim = 64;
  c.num_heads = 2;
  c.head_hidden = 32;
  c.dropout_rate = 0.1;
  c.conv_stage = {{32, 20, 5}, {32, 5, 4}, {32, 5, 4}};
  c.pos_conv_kernel = 8;
  c.pos_conv_groups = 4;
  c.sample_rate = 8000;
  return c;
}

// ---- model container -------------------------------------------------------

Model::Model(ModelConfig config, std::vector<Parameter> params)
    : config_(std::move(config)), params_(std::move(params)) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!index_.emplace(params_[i].name, i).second)
      throw std::invalid_argument("duplicate parameter name " + params_[i].name);
  }
}

Parameter& Model::parameter(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return params_[it->second];
}

const Parameter& Model::parameter(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return params_[it->second];
}

bool Model::has_parameter(std::string_view name) const { return index_.contains(name); }

std::uint64_t Model::parameter_count() const {
  std::uint64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

bool is_conv_stage_parameter(std::string_view name) { return name.starts_with("conv."); }

// ---- construction ----------------------------------------------------------

namespace {

class ParamBuilder {
 public:
  explicit ParamBuilder(std::uint64_t seed) : rng_(derive_seed(seed, "init")) {}

  void dense(const std::string& prefix, std::size_t in, std::size_t out) {
    uniform(prefix + ".weight", {in, out}, in);
    uniform(prefix + ".bias", {out}, in);
  }
  void norm(const std::string& prefix, std::size_t width) {
    params_.push_back({prefix + ".gain", Tensor({width}, 1.0), {}, true});
    params_.push_back({prefix + ".bias", Tensor({width}, 0.0), {}, true});
  }
  void conv(const std::string& prefix, std::size_t out, std::size_t in_per_group, std::size_t kernel) {
    uniform(prefix + ".weight", {out, in_per_group, kernel}, in_per_group * kernel);
    uniform(prefix + ".bias", {out}, in_per_group * kernel);
  }

  std::vector<Parameter> take() { return std::move(params_); }

 private:
  void uniform(std::string name, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng_.uniform(-bound, bound);
    params_.push_back({std::move(name), std::move(t), {}, true});
  }

  Rng rng_;
  std::vector<Parameter> params_;
};

std::string layer_prefix(std::size_t l) { return "layers." + std::to_string(l); }

}  // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamBuilder b(seed);
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < config.conv_stage.size(); ++i) {
    const auto& c = config.conv_stage[i];
    const std::string p = "conv." + std::to_string(i);
    b.conv(p, c.channels, in_ch, c.kernel);
    b.norm(p + ".norm", c.channels);
    in_ch = c.channels;
  }
  const std::size_t h = config.hidden_dim;
  b.norm("proj.norm", in_ch);
  b.dense("proj", in_ch, h);
  b.conv("pos_conv", h, h / config.pos_conv_groups, config.pos_conv_kernel);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    b.norm(p + ".attn_norm", h);
    for (const char* m : {"q", "k", "v", "o"}) b.dense(p + ".attn." + m, h, h);
    b.norm(p + ".ffn_norm", h);
    b.dense(p + ".ffn.in", h, config.ffn_dim);
    b.dense(p + ".ffn.out", config.ffn_dim, h);
  }
  b.norm("encoder.norm", h);
  if (config.age_head) {
    b.dense("age_head.dense", h, config.head_hidden);
    b.dense("age_head.out", config.head_hidden, 1);
  }
  if (config.gender_head) {
    b.dense("gender_head.dense", h, config.head_hidden);
    b.dense("gender_head.out", config.head_hidden, kNumGenders);
  }
  auto params = b.take();
  for (auto& p : params) p.trainable = !is_conv_stage_parameter(p.name);
  return Model(config, std::move(params));
}

// ---- forward ---------------------------------------------------------------

namespace {

template <class M>
Var bind_param(Graph& g, M& model, const std::string& name) {
  return g.param(model.parameter(name));
}

template <class M>
Var dense(Graph& g, M& model, const std::string& prefix, Var x) {
  return add_bias(matmul(x, bind_param(g, model, prefix + ".weight")), bind_param(g, model, prefix + ".bias"));
}

template <class M>
Var norm(Graph& g, M& model, const std::string& prefix, Var x) {
  return layernorm(x, bind_param(g, model, prefix + ".gain"), bind_param(g, model, prefix + ".bias"),
                   model.config().layer_norm_eps);
}

template <class M>
Var self_attention(Graph& g, M& model, const std::string& prefix, Var x) {
  const auto& cfg = model.config();
  const std::size_t dh = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = dense(g, model, prefix + ".q", x);
  Var k = dense(g, model, prefix + ".k", x);
  Var v = dense(g, model, prefix + ".v", x);
  std::vector<Var> heads;
  heads.reserve(cfg.num_heads);
  for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) {
    const std::size_t b = hd * dh, e = b + dh;
    Var scores = scale(matmul(slice_cols(q, b, e), transpose(slice_cols(k, b, e))), inv_sqrt);
    heads.push_back(matmul(softmax(scores, 1), slice_cols(v, b, e)));
  }
  Var ctx = heads.size() == 1 ? heads.front() : concat_cols(heads);
  return dense(g, model, prefix + ".o", ctx);
}

template <class M>
Var encode_impl(Graph& g, M& model, const Tensor& features) {
  const auto& cfg = model.config();
  if (features.rank() != 2 || features.dim(1) != cfg.conv_stage.back().channels)
    throw ShapeError("encode: features " + shape_string(features.shape()) +
                     " do not match conv stage width " +
                     std::to_string(cfg.conv_stage.back().channels));
  Var h = g.constant(features);
  h = dense(g, model, "proj", norm(g, model, "proj.norm", h));

  Conv1dParams pc;
  pc.pad_left = cfg.pos_conv_kernel / 2;
  pc.pad_right = cfg.pos_conv_kernel - 1 - pc.pad_left;
  pc.groups = cfg.pos_conv_groups;
  Var pos = conv1d(h, bind_param(g, model, "pos_conv.weight"), bind_param(g, model, "pos_conv.bias"), pc);
  h = add(h, gelu(pos));

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    h = add(h, self_attention(g, model, p + ".attn", norm(g, model, p + ".attn_norm", h)));
    Var f = norm(g, model, p + ".ffn_norm", h);
    f = dense(g, model, p + ".ffn.out", gelu(dense(g, model, p + ".ffn.in", f)));
    h = add(h, f);
  }
  h = norm(g, model, "encoder.norm", h);
  return mean_pool(h, h.value().dim(0));
}

template <class M>
Var head(Graph& g, M& model, const std::string& prefix, Var pooled, Mode mode, Rng* rng) {
  Var x = tanh(dense(g, model, prefix + ".dense", pooled));
  if (mode == Mode::train && model.config().dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("train mode needs a random source for dropout");
    x = dropout(x, model.config().dropout_rate, *rng);
  }
  return dense(g, model, prefix + ".out", x);
}

template <class M>
HeadOutputs heads_impl(Graph& g, M& model, Var pooled, Mode mode, Rng* rng) {
  HeadOutputs out;
  if (pooled.value().rank() == 1) pooled = stack_rows(std::span<const Var>(&pooled, 1));
  if (model.config().age_head) out.age = column(head(g, model, "age_head", pooled, mode, rng), 0);
  if (model.config().gender_head) out.gender = head(g, model, "gender_head", pooled, mode, rng);
  return out;
}

Prediction to_prediction(const HeadOutputs& h) {
  Prediction p;
  if (h.age) p.age_norm = h.age->value()[0];
  if (h.gender) {
    std::array<double, kNumGenders> s{};
    for (std::size_t i = 0; i < kNumGenders; ++i) s[i] = h.gender->value()[i];
    p.gender_scores = s;
  }
  return p;
}

}  // namespace

Tensor extract_features(const Model& model, std::span<const double> waveform) {
  const auto& cfg = model.config();
  if (waveform.size() < cfg.min_samples())
    throw std::invalid_argument("waveform of " + std::to_string(waveform.size()) +
                                " samples is too short; the conv stage needs at least " +
                                std::to_string(cfg.min_samples()));
  Graph g;
  Var x = g.constant(Tensor({waveform.size(), 1}, std::vector<double>(waveform.begin(), waveform.end())));
  for (std::size_t i = 0; i < cfg.conv_stage.size(); ++i) {
    const std::string p = "conv." + std::to_string(i);
    Conv1dParams cp;
    cp.stride = cfg.conv_stage[i].stride;
    x = conv1d(x, g.param(model.parameter(p + ".weight")), g.param(model.parameter(p + ".bias")), cp);
    x = gelu(norm(g, model, p + ".norm", x));
  }
  return x.value();
}

Var encode(Graph& g, Model& model, const Tensor& features) { return encode_impl(g, model, features); }
Var encode(Graph& g, const Model& model, const Tensor& features) {
  return encode_impl(g, model, features);
}

HeadOutputs apply_heads(Graph& g, Model& model, Var pooled, Mode mode, Rng* rng) {
  return heads_impl(g, model, pooled, mode, rng);
}
HeadOutputs apply_heads(Graph& g, const Model& model, Var pooled, Mode mode, Rng* rng) {
  return heads_impl(g, model, pooled, mode, rng);
}

Prediction forward_features(const Model& model, const Tensor& features, Mode mode, Rng* rng) {
  Graph g;
  Var pooled = encode(g, model, features);
  return to_prediction(apply_heads(g, model, pooled, mode, rng));
}

Prediction forward(const Model& model, std::span<const double> waveform, Mode mode, Rng* rng) {
  return forward_features(model, extract_features(model, waveform), mode, rng);
}

// ---- surgery ---------------------------------------------------------------

namespace {

std::optional<std::size_t> layer_of(std::string_view name) {
  if (!name.starts_with("layers.")) return std::nullopt;
  name.remove_prefix(7);
  const auto dot = name.find('.');
  return static_cast<std::size_t>(std::stoul(std::string(name.substr(0, dot))));
}

}  // namespace

Model truncate_layers(const Model& model, std::size_t n) {
  const auto& cfg = model.config();
  if (n < 1 || n > cfg.num_layers)
    throw std::out_of_range("truncate_layers: n must be in [1, " + std::to_string(cfg.num_layers) +
                            "], got " + std::to_string(n));
  ModelConfig out_cfg = cfg;
  out_cfg.num_layers = n;
  std::vector<Parameter> kept;
  for (const auto& p : model.parameters()) {
    auto l = layer_of(p.name);
    if (l && *l >= n) continue;
    kept.push_back({p.name, p.value, {}, p.trainable});
  }
  return Model(out_cfg, std::move(kept));
}

Model detach_head(const Model& model, Task task) {
  ModelConfig cfg = model.config();
  const bool present = task == Task::age ? cfg.age_head : cfg.gender_head;
  const bool other = task == Task::age ? cfg.gender_head : cfg.age_head;
  const std::string prefix = task == Task::age ? "age_head." : "gender_head.";
  if (!present) throw std::invalid_argument("detach_head: model has no " + prefix.substr(0, prefix.size() - 1));
  if (!other) throw std::invalid_argument("detach_head: cannot remove the only remaining head");
  (task == Task::age ? cfg.age_head : cfg.gender_head) = false;
  std::vector<Parameter> kept;
  for (const auto& p : model.parameters())
    if (!p.name.starts_with(prefix)) kept.push_back({p.name, p.value, {}, p.trainable});
  return Model(cfg, std::move(kept));
}

}  // namespace agm
