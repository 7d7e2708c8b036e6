#include "agm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace agm {

namespace {

struct CccStats {
  double mean_p = 0.0, mean_t = 0.0;
  double var_p = 0.0, var_t = 0.0, cov = 0.0;
  double denom = 0.0;
  bool clamped = false;
};

CccStats ccc_stats(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size())
    throw std::invalid_argument("ccc: prediction/target lengths differ (" +
                                std::to_string(p.size()) + " vs " + std::to_string(t.size()) + ")");
  if (p.size() < 2)
    throw std::invalid_argument("ccc: needs at least 2 values, got " + std::to_string(p.size()));
  CccStats s;
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.mean_p += p[i];
    s.mean_t += t[i];
  }
  s.mean_p /= n;
  s.mean_t /= n;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double dp = p[i] - s.mean_p, dt = t[i] - s.mean_t;
    s.var_p += dp * dp;
    s.var_t += dt * dt;
    s.cov += dp * dt;
  }
  s.var_p /= n;
  s.var_t /= n;
  s.cov /= n;
  const double gap = s.mean_p - s.mean_t;
  s.denom = s.var_p + s.var_t + gap * gap;
  if (s.denom < kCccEps) {
    s.denom = kCccEps;
    s.clamped = true;
  }
  return s;
}

}  // namespace

double ccc(std::span<const double> pred, std::span<const double> target) {
  const CccStats s = ccc_stats(pred, target);
  return 2.0 * s.cov / s.denom;
}

Var ccc_loss(Var pred, std::span<const double> target) {
  Graph& g = pred.graph();
  const Tensor& pv = pred.value();
  if (pv.rank() != 1) throw ShapeError("ccc_loss: predictions must be rank-1, got " + shape_string(pv.shape()));
  const CccStats s = ccc_stats(pv.values(), target);
  const double loss = 1.0 - 2.0 * s.cov / s.denom;
  std::vector<double> tgt(target.begin(), target.end());
  const auto pi = pred.id(), self = g.size();
  return g.record(Tensor::scalar(loss), {pi}, [=, tgt = std::move(tgt)](Graph& gr) {
    const double gy = gr.grad(self)[0];
    const Tensor& p = gr.value(pi);
    Tensor& gp = gr.grad_for(pi);
    const double n = static_cast<double>(tgt.size());
    const double gap = s.mean_p - s.mean_t;
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const double dcov = (tgt[i] - s.mean_t) / n;
      const double ddenom = s.clamped ? 0.0 : 2.0 * (p[i] - s.mean_p) / n + 2.0 * gap / n;
      const double dccc = 2.0 * (dcov * s.denom - s.cov * ddenom) / (s.denom * s.denom);
      gp[i] += -gy * dccc;
    }
  });
}

Var ce_loss(Var logits, std::span<const Gender> labels) {
  Graph& g = logits.graph();
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("ce_loss: logits must be [batch x classes]");
  const std::size_t batch = lv.dim(0), classes = lv.dim(1);
  if (labels.size() != batch)
    throw std::invalid_argument("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(batch) + " rows");
  std::vector<std::size_t> idx(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    idx[b] = static_cast<std::size_t>(labels[b]);
    if (idx[b] >= classes)
      throw std::out_of_range("ce_loss: label " + std::to_string(idx[b]) + " outside " +
                              std::to_string(classes) + " classes");
  }
  Tensor probs({batch, classes});
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = lv.values().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[idx[b]];
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - lse);
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  const auto li = logits.id(), self = g.size();
  return g.record(Tensor::scalar(total * inv_b), {li},
                  [=, probs = std::move(probs), idx = std::move(idx)](Graph& gr) {
                    const double gy = gr.grad(self)[0];
                    Tensor& gl = gr.grad_for(li);
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t c = 0; c < classes; ++c) {
                        const double onehot = c == idx[b] ? 1.0 : 0.0;
                        gl[b * classes + c] += gy * inv_b * (probs[b * classes + c] - onehot);
                      }
                  });
}

Var combined_loss(Var age_loss, Var gender_loss) {
  return scale(add(age_loss, gender_loss), 0.5);
}

}  // namespace agm
