#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agm/tensor.hpp"

namespace agm {

class Rng;

/// A named model weight. `grad` stays empty until a backward pass reaches it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor(); }
};

class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape. Nodes are appended as ops execute; backward() walks
/// them once in reverse construction order, so every input id precedes its
/// consumers and the tape is acyclic by construction.
///
/// A graph belongs to one thread. Parameters bound through param() are read
/// in place; their gradients are added into Parameter::grad when backward()
/// finishes.
class Graph {
 public:
  using Backward = std::function<void(Graph&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is kept in the graph (see grad()).
  Var input(Tensor value, bool requires_grad = true);
  /// Leaf bound to a trainable (or frozen) parameter.
  Var param(Parameter& p);
  /// Read-only binding; never collects a gradient.
  Var param(const Parameter& p);

  /// Appends an op result. `backward` runs only when some input requires a
  /// gradient; it reads grad(out) and accumulates into grad_for(input).
  Var record(Tensor value, std::vector<std::size_t> inputs, Backward backward);

  const Tensor& value(std::size_t id) const;
  /// Gradient of node `id`; empty tensor when nothing flowed into it.
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  /// Gradient buffer of `id`, allocated as zeros on first use.
  Tensor& grad_for(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and back-propagates. `loss` must hold a
  /// single value.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* sink = nullptr;
    std::vector<std::size_t> inputs;
    Backward backward;
  };

  // deque: references returned by value() survive later appends.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Exact GELU: 0.5 x (1 + erf(x / sqrt 2)).
Var gelu(Var x);
Var tanh(Var x);
/// x [m x n] + bias [n] broadcast over rows.
Var add_bias(Var x, Var bias);
/// Max-subtracted softmax along `axis`.
Var softmax(Var x, std::size_t axis);
/// Normalizes over the last axis with population variance, then gain/bias.
Var layernorm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Mean of the first `valid_len` rows of x [frames x dim]; result [dim].
Var mean_pool(Var x, std::size_t valid_len);
Var transpose(Var x);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
/// Stacks rank-1 [n] (or [1 x n]) values into [count x n].
Var stack_rows(std::span<const Var> rows);
/// Column j of x [m x n] as a rank-1 [m] value.
Var column(Var x, std::size_t j);
Var sum(Var x);
/// Inverted dropout: zeroes with probability `rate`, scales survivors by
/// 1/(1-rate). Callers apply it only in training mode.
Var dropout(Var x, double rate, Rng& rng);

struct Conv1dParams {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t groups = 1;
};
/// Channel-last convolution: x [time x in], weight [out x in/groups x kernel].
Var conv1d(Var x, Var weight, std::optional<Var> bias, const Conv1dParams& p);

}  // namespace agm
