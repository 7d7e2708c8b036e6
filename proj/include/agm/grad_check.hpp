#pragma once

#include <cstddef>
#include <functional>

#include "agm/graph.hpp"

namespace agm {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

/// Builds a fresh graph per evaluation; must return a single-value Var.
using ScalarGraphFn = std::function<Var(Graph&, Var)>;

/// Compares reverse-mode gradients of `f` at `x` against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
///
/// Per-coordinate error is |a - n| / max(|a|, |n|, kGradCheckFloor): relative
/// for ordinary gradients, absolute for coordinates whose true gradient is
/// near zero (where a ratio would only measure round-off).
GradCheckResult grad_check(const ScalarGraphFn& f, const Tensor& x, double h = 1e-5);

/// Same comparison for a value function evaluated outside any graph, given
/// the analytic gradient at `x`.
GradCheckResult grad_check(const std::function<double(const Tensor&)>& value,
                           const Tensor& analytic, const Tensor& x, double h = 1e-5);

inline constexpr double kGradCheckFloor = 1e-4;

}  // namespace agm
