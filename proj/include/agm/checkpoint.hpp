#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "agm/model.hpp"
#include "agm/train.hpp"

namespace agm {

/// Training progress stored next to the weights.
struct TrainingState {
  std::size_t epoch = 0;
  double dev_score = 0.0;
  AdamState adam;
};

struct Checkpoint {
  Model model;
  std::optional<TrainingState> state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic "AGMCKPT\0", u32 version, length-prefixed JSON model
/// config, then each parameter (name, trainable flag, shape, little-endian
/// f64 values) and an optional training-state block.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::optional<TrainingState>& state = std::nullopt);

/// Throws UsageError if the file is missing and DataError if it is
/// truncated, has the wrong magic/version, or does not match its config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace agm
