#include "agm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agm {

namespace {

double scalar_of(const Var& y) {
  if (y.value().size() != 1)
    throw std::invalid_argument("grad_check: function must return a scalar, got " +
                                shape_string(y.value().shape()));
  return y.value()[0];
}

}  // namespace

GradCheckResult grad_check(const std::function<double(const Tensor&)>& value,
                           const Tensor& analytic, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (analytic.shape() != x.shape())
    throw ShapeError("grad_check: analytic gradient shape differs from x");
  GradCheckResult r;
  r.analytic = analytic;
  r.numeric = Tensor(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = value(probe);
    probe[i] = x[i] - h;
    const double down = value(probe);
    probe[i] = x[i];
    const double num = (up - down) / (2.0 * h);
    r.numeric[i] = num;
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(num), kGradCheckFloor});
    const double err = std::abs(a - num) / denom;
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

GradCheckResult grad_check(const ScalarGraphFn& f, const Tensor& x, double h) {
  Tensor analytic;
  {
    Graph g;
    Var in = g.input(x, true);
    Var y = f(g, in);
    scalar_of(y);
    g.backward(y);
    analytic = g.grad(in.id()).empty() ? Tensor(x.shape(), 0.0) : g.grad(in.id());
  }
  auto value = [&f](const Tensor& t) {
    Graph g;
    Var in = g.input(t, false);
    return scalar_of(f(g, in));
  };
  return grad_check(value, analytic, x, h);
}

}  // namespace agm
