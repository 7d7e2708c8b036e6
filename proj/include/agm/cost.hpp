#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "agm/model.hpp"

namespace agm {

/// Closed-form parameter and multiply-accumulate accounting.
///
/// Parameter blocks: conv_stage, feature_projection, positional_conv,
/// transformer.attention, transformer.ffn, transformer.norms, encoder_norm,
/// age_head, gender_head.
/// MAC blocks: conv_stage, feature_projection, positional_conv,
/// transformer.attention_dense, transformer.attention_scores,
/// transformer.ffn, age_head, gender_head. Normalization, softmax and
/// activations are not counted as MACs.
struct CostReport {
  std::uint64_t total_params = 0;
  std::map<std::string, std::uint64_t> params_by_block;
  std::uint64_t total_macs = 0;
  std::map<std::string, std::uint64_t> macs_by_block;
  double duration_s = 0.0;
  std::size_t frames = 0;

  std::string to_text() const;
};

CostReport count_params(const ModelConfig& config);

/// Parameters plus MACs for one utterance of `duration_s` seconds.
/// Throws if the duration yields no frame.
CostReport count_macs(const ModelConfig& config, double duration_s);

}  // namespace agm
