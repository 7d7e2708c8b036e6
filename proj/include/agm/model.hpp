#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agm/graph.hpp"
#include "agm/labels.hpp"

namespace agm {

class Rng;

struct ConvLayerSpec {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Encoder and head hyperparameters.
struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t num_heads = 2;
  std::size_t head_hidden = 32;
  double dropout_rate = 0.1;
  std::vector<ConvLayerSpec> conv_stage;
  /// Grouped convolution that injects relative position before the stack.
  std::size_t pos_conv_kernel = 8;
  std::size_t pos_conv_groups = 4;
  std::size_t sample_rate = 8000;
  double layer_norm_eps = 1e-5;
  bool age_head = true;
  bool gender_head = true;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;

  /// Product of conv strides: waveform samples per frame.
  std::size_t frame_hop() const;
  /// Shortest waveform that yields one frame.
  std::size_t min_samples() const;
  /// Frames produced by the conv stage; 0 when the input is too short.
  std::size_t frames_for(std::size_t samples) const;
  std::size_t head_dim() const { return hidden_dim / num_heads; }

  /// wav2vec2-large layout: 24 layers, width 1024, 16 heads, 7-layer
  /// 512-channel conv stage at 16 kHz.
  static ModelConfig paper_scale();
  /// Desk-scale layout used by tests and the synthetic experiments.
  static ModelConfig toy();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Mode { train, eval };
enum class Task { age, gender };

/// Parameters of the network plus their names. Conv-stage parameters are
/// frozen (trainable == false); everything above them trains.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::vector<Parameter> params);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;

  /// Scalars actually allocated across all parameters.
  std::uint64_t parameter_count() const;
  void zero_grad();

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Seeded initialization: weights and biases uniform in +-1/sqrt(fan_in),
/// layer-norm gains 1 and biases 0. Conv stage frozen.
Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Runs the frozen conv stage on a waveform; no tape is recorded.
/// Returns [frames x conv_channels]. Throws if the waveform is too short.
Tensor extract_features(const Model& model, std::span<const double> waveform);

/// Head outputs for a batch: age [batch] and gender logits [batch x 3].
struct HeadOutputs {
  std::optional<Var> age;
  std::optional<Var> gender;
};

/// Trunk above the conv stage for one utterance: projection, positional
/// conv, pre-norm transformer layers, final norm, mean pooling. Returns
/// the pooled [hidden_dim] vector. The Model& overload binds trainable
/// parameters so backward() reaches them.
Var encode(Graph& g, Model& model, const Tensor& features);
Var encode(Graph& g, const Model& model, const Tensor& features);

/// Heads over pooled rows [batch x hidden_dim]: dense -> tanh -> dropout
/// (train mode only) -> projection. `rng` is required in train mode.
HeadOutputs apply_heads(Graph& g, Model& model, Var pooled, Mode mode, Rng* rng);
HeadOutputs apply_heads(Graph& g, const Model& model, Var pooled, Mode mode, Rng* rng);

/// Full pass over one waveform. Eval mode is deterministic.
Prediction forward(const Model& model, std::span<const double> waveform, Mode mode = Mode::eval,
                   Rng* rng = nullptr);
/// Same, starting from precomputed conv features.
Prediction forward_features(const Model& model, const Tensor& features, Mode mode = Mode::eval,
                            Rng* rng = nullptr);

/// Keeps the bottom `n` transformer layers; all retained weights copied.
Model truncate_layers(const Model& model, std::size_t n);

/// Removes one task head, leaving a single-task model.
Model detach_head(const Model& model, Task task);

/// Conv stage is the only frozen block.
bool is_conv_stage_parameter(std::string_view name);

}  // namespace agm
