#include "agm/cost.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "agm/metrics.hpp"

namespace agm {

namespace {

using u64 = std::uint64_t;

u64 dense_params(u64 in, u64 out) { return in * out + out; }

std::string millions(u64 v, const char* unit) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << static_cast<double>(v) / (unit[0] == 'G' ? 1e9 : 1e6) << unit;
  return os.str();
}

}  // namespace

CostReport count_params(const ModelConfig& config) {
  config.validate();
  CostReport r;
  auto& b = r.params_by_block;
  u64 in_ch = 1;
  u64 conv = 0;
  for (const auto& c : config.conv_stage) {
    conv += c.channels * in_ch * c.kernel + c.channels;  // weight + bias
    conv += 2 * c.channels;                              // per-layer norm
    in_ch = c.channels;
  }
  b["conv_stage"] = conv;
  const u64 h = config.hidden_dim, f = config.ffn_dim, hh = config.head_hidden;
  b["feature_projection"] = 2 * in_ch + dense_params(in_ch, h);
  b["positional_conv"] = h * (h / config.pos_conv_groups) * config.pos_conv_kernel + h;
  const u64 layers = config.num_layers;
  b["transformer.attention"] = layers * 4 * dense_params(h, h);
  b["transformer.ffn"] = layers * (dense_params(h, f) + dense_params(f, h));
  b["transformer.norms"] = layers * 2 * 2 * h;
  b["encoder_norm"] = 2 * h;
  if (config.age_head) b["age_head"] = dense_params(h, hh) + dense_params(hh, 1);
  if (config.gender_head) b["gender_head"] = dense_params(h, hh) + dense_params(hh, kNumGenders);
  for (const auto& [k, v] : b) r.total_params += v;
  return r;
}

CostReport count_macs(const ModelConfig& config, double duration_s) {
  CostReport r = count_params(config);
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw std::invalid_argument("count_macs: duration must be a positive number of seconds");
  const auto samples = static_cast<u64>(std::llround(duration_s * static_cast<double>(config.sample_rate)));
  const u64 frames = config.frames_for(samples);
  if (frames == 0)
    throw std::invalid_argument("count_macs: " + format_number(duration_s) +
                                " s is shorter than one conv receptive field (" +
                                std::to_string(config.min_samples()) + " samples)");
  r.duration_s = duration_s;
  r.frames = frames;
  auto& m = r.macs_by_block;
  u64 len = samples, in_ch = 1, conv = 0;
  for (const auto& c : config.conv_stage) {
    len = (len - c.kernel) / c.stride + 1;
    conv += len * c.channels * in_ch * c.kernel;
    in_ch = c.channels;
  }
  m["conv_stage"] = conv;
  const u64 h = config.hidden_dim, f = config.ffn_dim, hh = config.head_hidden, t = frames;
  const u64 layers = config.num_layers;
  m["feature_projection"] = t * in_ch * h;
  m["positional_conv"] = t * h * (h / config.pos_conv_groups) * config.pos_conv_kernel;
  m["transformer.attention_dense"] = layers * 4 * t * h * h;
  // Q K^T and softmax(.) V, each t * t * h across all heads.
  m["transformer.attention_scores"] = layers * 2 * t * t * h;
  m["transformer.ffn"] = layers * 2 * t * h * f;
  if (config.age_head) m["age_head"] = h * hh + hh;
  if (config.gender_head) m["gender_head"] = h * hh + hh * kNumGenders;
  for (const auto& [k, v] : m) r.total_macs += v;
  return r;
}

std::string CostReport::to_text() const {
  std::ostringstream os;
  os << "params.total=" << total_params << " (" << millions(total_params, "M") << ")\n";
  for (const auto& [k, v] : params_by_block) os << "params." << k << '=' << v << '\n';
  if (frames) {
    os << "duration_s=" << format_number(duration_s) << '\n';
    os << "frames=" << frames << '\n';
    os << "macs.total=" << total_macs << " (" << millions(total_macs, "G") << ")\n";
    for (const auto& [k, v] : macs_by_block) os << "macs." << k << '=' << v << '\n';
  }
  return os.str();
}

}  // namespace agm
