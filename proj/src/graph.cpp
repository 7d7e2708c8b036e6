#include "agm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "agm/kernels.hpp"
#include "agm/rng.hpp"

namespace agm {

Var Graph::constant(Tensor value) { return input(std::move(value), false); }

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.requires_grad = p.trainable;
  n.sink = p.trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw std::out_of_range("graph input id out of range");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Tensor& Graph::grad_for(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw std::invalid_argument("backward: variable from another graph");
  if (value(loss.id()).size() != 1)
    throw ShapeError("backward needs a scalar loss, got " + shape_string(value(loss.id()).shape()));
  if (!nodes_[loss.id()].requires_grad) return;
  grad_for(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this);
  }
  for (auto& n : nodes_) {
    if (!n.sink || n.grad.empty()) continue;
    if (n.sink->grad.empty()) {
      n.sink->grad = n.grad;
    } else {
      auto dst = n.sink->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

// ---- helpers ---------------------------------------------------------------

namespace {

void require_same_graph(const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void accumulate(Tensor& dst, std::span<const double> src, double factor = 1.0) {
  auto d = dst.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * src[i];
}

template <class Fwd, class Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const auto xi = x.id();
  const auto self = g.size();
  return g.record(std::move(out), {xi}, [xi, self, deriv](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    const Tensor& xv = gr.value(xi);
    const Tensor& yv = gr.value(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = a.graph();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: inner extents differ, " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::gemm({m, n, k, false, false}, av.values(), bv.values(), out.values(), false);
  const auto ai = a.id(), bi = b.id(), self = g.size();
  return g.record(std::move(out), {ai, bi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) {
      // dA = dY * B^T
      kernels::gemm({m, k, n, false, true}, gy.values(), gr.value(bi).values(),
                    gr.grad_for(ai).values(), true);
    }
    if (gr.requires_grad(bi)) {
      // dB = A^T * dY
      kernels::gemm({k, n, m, true, false}, gr.value(ai).values(), gy.values(),
                    gr.grad_for(bi).values(), true);
    }
  });
}

Var transpose(Var x) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  require_rank2("transpose", xv);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
  });
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("add", a.value(), b.value());
  Graph& g = a.graph();
  Tensor out = a.value();
  accumulate(out, b.value().values());
  const auto ai = a.id(), bi = b.id(), self = g.size();
  return g.record(std::move(out), {ai, bi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) accumulate(gr.grad_for(ai), gy.values());
    if (gr.requires_grad(bi)) accumulate(gr.grad_for(bi), gy.values());
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("sub", a.value(), b.value());
  Graph& g = a.graph();
  Tensor out = a.value();
  accumulate(out, b.value().values(), -1.0);
  const auto ai = a.id(), bi = b.id(), self = g.size();
  return g.record(std::move(out), {ai, bi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) accumulate(gr.grad_for(ai), gy.values());
    if (gr.requires_grad(bi)) accumulate(gr.grad_for(bi), gy.values(), -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("mul", a.value(), b.value());
  Graph& g = a.graph();
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ai = a.id(), bi = b.id(), self = g.size();
  return g.record(std::move(out), {ai, bi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(ai)) {
      const Tensor& bv = gr.value(bi);
      Tensor& ga = gr.grad_for(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (gr.requires_grad(bi)) {
      const Tensor& av = gr.value(ai);
      Tensor& gb = gr.grad_for(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  return unary(x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Var gelu(Var x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var add_bias(Var x, Var bias) {
  require_same_graph(x, bias);
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2("add_bias", xv);
  if (bv.size() != xv.dim(1))
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                     shape_string(xv.shape()));
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out = xv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const auto xi = x.id(), bi = bias.id(), self = g.size();
  return g.record(std::move(out), {xi, bi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(xi)) accumulate(gr.grad_for(xi), gy.values());
    if (gr.requires_grad(bi)) {
      Tensor& gb = gr.grad_for(bi);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
    }
  });
}

// ---- normalization / reduction -----------------------------------------------

Var softmax(Var x, std::size_t axis) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (axis >= xv.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_string(xv.shape()));
  std::size_t outer = 1, inner = 1;
  const std::size_t len = xv.dim(axis);
  for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
  for (std::size_t d = axis + 1; d < xv.rank(); ++d) inner *= xv.dim(d);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    const Tensor& y = gr.value(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) dot += gy[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t p = base + l * inner;
          gx[p] += y[p] * (gy[p] - dot);
        }
      }
    }
  });
}

Var layernorm(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  const std::size_t width = xv.shape().back();
  if (gain.value().size() != width || bias.value().size() != width)
    throw ShapeError("layernorm: gain/bias must have " + std::to_string(width) + " entries");
  const std::size_t rows = xv.size() / width;
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  // Normalized values and per-row 1/sigma, kept for the backward pass.
  Tensor xhat(xv.shape());
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.values().data() + r * width;
    double mean = 0.0;
    for (std::size_t j = 0; j < width; ++j) mean += row[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  const auto xi = x.id(), gi = gain.id(), bi = bias.id(), self = g.size();
  return g.record(std::move(out), {xi, gi, bi},
                  [=, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Graph& gr) {
                    const Tensor& gy = gr.grad(self);
                    const Tensor& gv = gr.value(gi);
                    if (gr.requires_grad(gi)) {
                      Tensor& gg = gr.grad_for(gi);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < width; ++j)
                          gg[j] += gy[r * width + j] * xhat[r * width + j];
                    }
                    if (gr.requires_grad(bi)) {
                      Tensor& gb = gr.grad_for(bi);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < width; ++j) gb[j] += gy[r * width + j];
                    }
                    if (gr.requires_grad(xi)) {
                      Tensor& gx = gr.grad_for(xi);
                      const double n = static_cast<double>(width);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double mean_d = 0.0, mean_dh = 0.0;
                        for (std::size_t j = 0; j < width; ++j) {
                          const double d = gy[r * width + j] * gv[j];
                          mean_d += d;
                          mean_dh += d * xhat[r * width + j];
                        }
                        mean_d /= n;
                        mean_dh /= n;
                        for (std::size_t j = 0; j < width; ++j) {
                          const double d = gy[r * width + j] * gv[j];
                          gx[r * width + j] +=
                              inv_sigma[r] * (d - mean_d - xhat[r * width + j] * mean_dh);
                        }
                      }
                    }
                  });
}

Var mean_pool(Var x, std::size_t valid_len) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  require_rank2("mean_pool", xv);
  const std::size_t frames = xv.dim(0), dim = xv.dim(1);
  if (valid_len == 0 || valid_len > frames)
    throw std::invalid_argument("mean_pool: valid_len must be in [1, " + std::to_string(frames) +
                                "], got " + std::to_string(valid_len));
  Tensor out({dim});
  for (std::size_t t = 0; t < valid_len; ++t)
    for (std::size_t j = 0; j < dim; ++j) out[j] += xv[t * dim + j];
  const double inv = 1.0 / static_cast<double>(valid_len);
  for (auto& v : out.values()) v *= inv;
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t t = 0; t < valid_len; ++t)
      for (std::size_t j = 0; j < dim; ++j) gx[t * dim + j] += gy[j] * inv;
  });
}

Var sum(Var x) {
  Graph& g = x.graph();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const auto xi = x.id(), self = g.size();
  return g.record(Tensor::scalar(s), {xi}, [=](Graph& gr) {
    const double gy = gr.grad(self)[0];
    for (auto& v : gr.grad_for(xi).values()) v += gy;
  });
}

// ---- slicing / stacking ------------------------------------------------------

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  require_rank2("slice_cols", xv);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (begin >= end || end > c)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(xv.shape()));
  const std::size_t w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.values().data() + i * c + begin, w, out.values().data() + i * w);
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += gy[i * w + j];
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  require_rank2("slice_rows", xv);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (begin >= end || end > r)
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(xv.shape()));
  Tensor out({end - begin, c},
             std::vector<double>(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                 xv.values().begin() + static_cast<std::ptrdiff_t>(end * c)));
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[begin * c + i] += gy[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Graph& g = parts.front().graph();
  const std::size_t r = parts.front().value().dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p);
    require_rank2("concat_cols", p.value());
    if (p.value().dim(0) != r)
      throw ShapeError("concat_cols: row mismatch " + shape_string(p.value().shape()));
    ids.push_back(p.id());
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.values().data() + i * widths[k], widths[k],
                  out.values().data() + i * total + off);
    off += widths[k];
  }
  const auto self = g.size();
  return g.record(std::move(out), ids, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        Tensor& gp = gr.grad_for(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            gp[i * widths[k] + j] += gy[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  Graph& g = rows.front().graph();
  const std::size_t n = rows.front().value().size();
  std::vector<std::size_t> ids;
  Tensor out({rows.size(), n});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require_same_graph(rows.front(), rows[k]);
    const Tensor& rv = rows[k].value();
    if (rv.size() != n || rv.rows() != 1)
      throw ShapeError("stack_rows: row " + std::to_string(k) + " has shape " +
                       shape_string(rv.shape()));
    std::copy(rv.values().begin(), rv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(k * n));
    ids.push_back(rows[k].id());
  }
  const auto self = g.size();
  return g.record(std::move(out), ids, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.requires_grad(ids[k])) continue;
      Tensor& gp = gr.grad_for(ids[k]);
      for (std::size_t j = 0; j < n; ++j) gp[j] += gy[k * n + j];
    }
  });
}

Var column(Var x, std::size_t j) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  require_rank2("column", xv);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (j >= c) throw ShapeError("column: index " + std::to_string(j) + " out of range");
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) out[i] = xv[i * c + j];
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < r; ++i) gx[i * c + j] += gy[i];
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const auto xi = x.id(), self = g.size();
  return g.record(std::move(out), {xi}, [=, mask = std::move(mask)](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    Tensor& gx = gr.grad_for(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

// ---- convolution ---------------------------------------------------------------

Var conv1d(Var x, Var weight, std::optional<Var> bias, const Conv1dParams& p) {
  require_same_graph(x, weight);
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank2("conv1d", xv);
  if (wv.rank() != 3) throw ShapeError("conv1d: weight must be [out x in/groups x kernel]");
  kernels::Conv1dShape s;
  s.in_len = xv.dim(0);
  s.in_channels = xv.dim(1);
  s.out_channels = wv.dim(0);
  s.kernel = wv.dim(2);
  s.stride = p.stride;
  s.pad_left = p.pad_left;
  s.pad_right = p.pad_right;
  s.groups = p.groups;
  if (p.stride == 0 || p.groups == 0 || s.in_channels % p.groups || s.out_channels % p.groups ||
      wv.dim(1) != s.in_channels / p.groups)
    throw ShapeError("conv1d: weight " + shape_string(wv.shape()) + " incompatible with input " +
                     shape_string(xv.shape()) + " and groups=" + std::to_string(p.groups));
  if (s.in_len + s.pad_left + s.pad_right < s.kernel)
    throw ShapeError("conv1d: input of length " + std::to_string(s.in_len) +
                     " shorter than kernel " + std::to_string(s.kernel));
  std::vector<std::size_t> ids{x.id(), weight.id()};
  std::span<const double> bspan;
  if (bias) {
    require_same_graph(x, *bias);
    if (bias->value().size() != s.out_channels) throw ShapeError("conv1d: bias size mismatch");
    bspan = bias->value().values();
    ids.push_back(bias->id());
  }
  Tensor out({s.out_len(), s.out_channels});
  kernels::conv1d_forward(s, xv.values(), wv.values(), bspan, out.values());
  const auto xi = x.id(), wi = weight.id(), self = g.size();
  const std::optional<std::size_t> bi = bias ? std::optional(bias->id()) : std::nullopt;
  return g.record(std::move(out), ids, [=](Graph& gr) {
    const Tensor& gy = gr.grad(self);
    if (gr.requires_grad(xi)) {
      Tensor dx(gr.value(xi).shape());
      kernels::conv1d_backward_input(s, gy.values(), gr.value(wi).values(), dx.values());
      accumulate(gr.grad_for(xi), dx.values());
    }
    const bool need_w = gr.requires_grad(wi);
    const bool need_b = bi && gr.requires_grad(*bi);
    if (need_w || need_b) {
      Tensor dw(gr.value(wi).shape());
      Tensor db({s.out_channels});
      kernels::conv1d_backward_weight(s, gy.values(), gr.value(xi).values(), dw.values(),
                                      db.values());
      if (need_w) accumulate(gr.grad_for(wi), dw.values());
      if (need_b) accumulate(gr.grad_for(*bi), db.values());
    }
  });
}

}  // namespace agm
