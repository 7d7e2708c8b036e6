#pragma once

#include <span>

#include "agm/graph.hpp"
#include "agm/labels.hpp"

namespace agm {

/// Denominator guard of the concordance correlation coefficient.
inline constexpr double kCccEps = 1e-8;

/// Concordance correlation coefficient with population statistics:
/// 2 cov(p,t) / (var p + var t + (mean p - mean t)^2).
/// A denominator below kCccEps is replaced by kCccEps. Needs >= 2 values.
double ccc(std::span<const double> pred, std::span<const double> target);

/// 1 - CCC over one batch. `pred` is rank-1 [batch].
Var ccc_loss(Var pred, std::span<const double> target);

/// Mean over the batch of -log softmax(logits)[label]; logits [batch x classes].
Var ce_loss(Var logits, std::span<const Gender> labels);

/// Arithmetic mean of the two task losses.
Var combined_loss(Var age_loss, Var gender_loss);

}  // namespace agm
