#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"

#include "agm/grad_check.hpp"
#include "agm/graph.hpp"
#include "agm/rng.hpp"
#include "agm/tensor.hpp"

using namespace agm;
using agm::test::random_tensor;

TEST_SUITE("tensor") {
  TEST_CASE("shape and size agree") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  }

  TEST_CASE("finite check") {
    Tensor t = Tensor::vector({1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("rng") {
  TEST_CASE("engine is the standard 64-bit Mersenne Twister") {
    // The C++ standard fixes the 10000th output for the default seed.
    Rng r(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = r.next_u64();
    CHECK(v == 9981545732273789042ull);
  }

  TEST_CASE("draws are reproducible and in range") {
    Rng a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
      const double u = a.uniform();
      CHECK(u == b.uniform());
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(a.below(13) < 13);
      b.below(13);
    }
  }

  TEST_CASE("normal draws have unit variance") {
    Rng r(11);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }

  TEST_CASE("shuffle is a permutation") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    Rng r(3);
    r.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    CHECK(v != sorted);
  }

  TEST_CASE("derived seeds differ by subsystem and seed") {
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    // FNV-1a 64 reference values.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  }
}

TEST_SUITE("graph") {
  TEST_CASE("matmul examples") {
    Graph g;
    Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var b = g.constant(Tensor::matrix({{5, 6}, {7, 8}}));
    CHECK(matmul(a, b).value() == Tensor::matrix({{19, 22}, {43, 50}}));
    Var eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    CHECK(matmul(eye, b).value() == b.value());
    Var c = g.constant(Tensor({2, 3}));
    Var d = g.constant(Tensor({4, 2}));
    CHECK_THROWS_WITH_AS(matmul(c, d), doctest::Contains("[2x3]"), ShapeError);
  }

  TEST_CASE("elementwise examples") {
    Graph g;
    Var z = g.constant(Tensor::vector({0.0}));
    CHECK(gelu(z).value()[0] == 0.0);
    Var one = g.constant(Tensor::vector({1.0}));
    // 0.5 * (1 + erf(1/sqrt 2)) evaluated independently: 0.8413447460685429.
    CHECK(gelu(one).value()[0] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    Var x = g.constant(Tensor::vector({1.0, -2.0, 3.5}));
    CHECK(add(x, g.constant(Tensor({3}))).value() == x.value());
    CHECK(scale(x, 2.0).value() == Tensor::vector({2.0, -4.0, 7.0}));
    CHECK_THROWS_AS(add(x, g.constant(Tensor({2}))), ShapeError);
    CHECK_THROWS_AS(mul(x, g.constant(Tensor({4}))), ShapeError);
  }

  TEST_CASE("softmax examples") {
    Graph g;
    auto row = [&](std::vector<double> v) { return softmax(g.constant(Tensor::vector(std::move(v))), 0).value(); };
    auto s = row({0, 0, 0});
    for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    s = row({0, std::log(2.0)});
    CHECK(s[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
    s = row({1000, 1000});
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);
  }

  TEST_CASE("softmax rows sum to one") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      Graph g;
      const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(7);
      Tensor x = random_tensor(rng, {r, c}, -50, 50);
      for (std::size_t axis : {0u, 1u}) {
        Tensor y = softmax(g.constant(x), axis).value();
        const std::size_t outer = axis == 1 ? r : c, inner = axis == 1 ? c : r;
        for (std::size_t o = 0; o < outer; ++o) {
          double s = 0.0;
          for (std::size_t i = 0; i < inner; ++i) s += axis == 1 ? y.at(o, i) : y.at(i, o);
          CHECK(std::abs(s - 1.0) <= 1e-12);
        }
      }
    }
  }

  TEST_CASE("layernorm examples") {
    Graph g;
    Var gain = g.constant(Tensor::vector({1, 1}));
    Var zero = g.constant(Tensor({2}));
    Tensor y = layernorm(g.constant(Tensor::matrix({{1, 3}})), gain, zero, 0.0).value();
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-15));

    Var gain3 = g.constant(Tensor::vector({1, 1, 1}));
    Tensor c = layernorm(g.constant(Tensor::matrix({{4, 4, 4}})), gain3, g.constant(Tensor({3})), 1e-5).value();
    for (double v : c.values()) CHECK(v == 0.0);

    Var bias = g.constant(Tensor::vector({0.5, -2}));
    Tensor d = layernorm(g.constant(Tensor::matrix({{1, 7}, {3, -3}})), g.constant(Tensor({2})), bias).value();
    CHECK(d == Tensor::matrix({{0.5, -2}, {0.5, -2}}));
  }

  TEST_CASE("mean_pool examples") {
    Graph g;
    Var x = g.constant(Tensor::matrix({{1, 1}, {3, 3}}));
    CHECK(mean_pool(x, 2).value() == Tensor::vector({2, 2}));
    Var p = g.constant(Tensor::matrix({{1, 1}, {9, 9}}));
    CHECK(mean_pool(p, 1).value() == Tensor::vector({1, 1}));
    Var c = g.constant(Tensor({4, 3}, 2.5));
    CHECK(mean_pool(c, 4).value() == Tensor({3}, 2.5));
    CHECK_THROWS(mean_pool(x, 0));
    CHECK_THROWS(mean_pool(x, 3));
  }

  TEST_CASE("mean_pool ignores frames past valid_len") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t frames = 2 + rng.below(6), dim = 1 + rng.below(4);
      const std::size_t n = 1 + rng.below(frames);
      Tensor a = random_tensor(rng, {frames, dim});
      Tensor b = a;
      for (std::size_t t = n; t < frames; ++t)
        for (std::size_t j = 0; j < dim; ++j) b.at(t, j) = rng.uniform(-100, 100);
      Graph g;
      const Tensor pa = mean_pool(g.constant(a), n).value();
      const Tensor pb = mean_pool(g.constant(b), n).value();
      CHECK(pa == pb);
    }
  }

  TEST_CASE("fan-out accumulates both contributions") {
    // y = sum(x * x + 3x) through two consumers of x, against d/dx = 2x + 3.
    Rng rng(9);
    Tensor x0 = random_tensor(rng, {2, 3});
    Graph g;
    Var x = g.input(x0);
    Var y = sum(add(mul(x, x), scale(x, 3.0)));
    g.backward(y);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(g.grad(x.id())[i] == doctest::Approx(2 * x0[i] + 3).epsilon(1e-14));
  }

  TEST_CASE("parameters receive gradients unless frozen") {
    Parameter w{"w", Tensor::matrix({{1, 2}, {3, 4}}), {}, true};
    Parameter f{"f", Tensor::matrix({{1, 0}, {0, 1}}), {}, false};
    Graph g;
    Var x = g.constant(Tensor::matrix({{1, 1}}));
    Var y = sum(matmul(matmul(x, g.param(f)), g.param(w)));
    g.backward(y);
    CHECK(w.grad == Tensor::matrix({{1, 1}, {1, 1}}));
    CHECK(f.grad.empty());
  }

  TEST_CASE("dropout is inverted and identity at rate zero") {
    Rng rng(1);
    Graph g;
    Tensor x0({1000}, 1.0);
    Tensor y = dropout(g.constant(x0), 0.25, rng).value();
    double s = 0.0;
    for (double v : y.values()) {
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
      s += v;
    }
    CHECK(s / 1000 == doctest::Approx(1.0).epsilon(0.1));
    CHECK(dropout(g.constant(x0), 0.0, rng).value() == x0);
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("examples") {
    auto sq = [](Graph&, Var x) { return sum(mul(x, x)); };
    auto r = grad_check(sq, Tensor::vector({1, 2, 3}));
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.analytic == Tensor::vector({2, 4, 6}));

    auto c = [](Graph& g, Var) { return sum(g.constant(Tensor::vector({4.0}))); };
    auto rc = grad_check(c, Tensor::vector({1, 2}));
    CHECK(rc.max_rel_error == 0.0);

    auto vec = [](Graph&, Var x) { return x; };
    CHECK_THROWS(grad_check(vec, Tensor::vector({1, 2})));
  }

  // Every op, random shapes and values, well over 100 seeded trials each.
  TEST_CASE("every op passes a finite-difference check") {
    Rng rng(2024);
    const int trials = 120;
    struct Case {
      const char* name;
      std::function<Var(Graph&, Var, Rng&, const Tensor&)> f;
    };
    auto weights = [](Graph& g, const Tensor& w) { return g.constant(w); };
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(4), k = 1 + rng.below(4);
      Tensor x = random_tensor(rng, {r, c});
      Tensor wb = random_tensor(rng, {c, k});
      Tensor wa = random_tensor(rng, {k, r});
      Tensor same = random_tensor(rng, {r, c});
      Tensor bias = random_tensor(rng, {c});
      Tensor gain = random_tensor(rng, {c}, 0.5, 1.5);
      Tensor mix = random_tensor(rng, {r, c});
      const std::size_t b0 = rng.below(c), b1 = b0 + 1 + rng.below(c - b0);
      const std::size_t r0 = rng.below(r), r1 = r0 + 1 + rng.below(r - r0);
      const std::size_t pool = 1 + rng.below(r);

      // Weighted sum keeps every output coordinate in play.
      auto reduce = [](Graph& g, Var y, Rng& wr) {
        Tensor w(y.shape());
        for (auto& v : w.values()) v = wr.uniform(-1, 1);
        return sum(mul(y, g.constant(w)));
      };
      std::vector<Case> cases = {
          {"matmul_left", [&](Graph& g, Var v, Rng&, const Tensor&) { return matmul(v, weights(g, wb)); }},
          {"matmul_right", [&](Graph& g, Var v, Rng&, const Tensor&) { return matmul(weights(g, wa), v); }},
          {"add", [&](Graph& g, Var v, Rng&, const Tensor&) { return add(v, g.constant(same)); }},
          {"sub", [&](Graph& g, Var v, Rng&, const Tensor&) { return sub(g.constant(same), v); }},
          {"mul", [&](Graph& g, Var v, Rng&, const Tensor&) { return mul(v, g.constant(same)); }},
          {"mul_self", [&](Graph&, Var v, Rng&, const Tensor&) { return mul(v, v); }},
          {"scale", [&](Graph&, Var v, Rng&, const Tensor&) { return scale(v, -1.7); }},
          {"gelu", [&](Graph&, Var v, Rng&, const Tensor&) { return gelu(v); }},
          {"tanh", [&](Graph&, Var v, Rng&, const Tensor&) { return tanh(v); }},
          {"add_bias", [&](Graph& g, Var v, Rng&, const Tensor&) { return add_bias(v, g.constant(bias)); }},
          {"softmax_rows", [&](Graph&, Var v, Rng&, const Tensor&) { return softmax(v, 1); }},
          {"softmax_cols", [&](Graph&, Var v, Rng&, const Tensor&) { return softmax(v, 0); }},
          {"layernorm",
           [&](Graph& g, Var v, Rng&, const Tensor&) { return layernorm(v, g.constant(gain), g.constant(bias)); }},
          {"mean_pool", [&](Graph&, Var v, Rng&, const Tensor&) { return mean_pool(v, pool); }},
          {"transpose", [&](Graph&, Var v, Rng&, const Tensor&) { return transpose(v); }},
          {"slice_cols", [&](Graph&, Var v, Rng&, const Tensor&) { return slice_cols(v, b0, b1); }},
          {"slice_rows", [&](Graph&, Var v, Rng&, const Tensor&) { return slice_rows(v, r0, r1); }},
          {"concat_cols",
           [&](Graph& g, Var v, Rng&, const Tensor&) {
             Var parts[] = {v, g.constant(same), v};
             return concat_cols(parts);
           }},
          {"stack_rows",
           [&](Graph&, Var v, Rng&, const Tensor&) {
             Var rows[] = {mean_pool(v, r), mean_pool(v, 1)};
             return stack_rows(rows);
           }},
          {"column", [&](Graph&, Var v, Rng&, const Tensor&) { return column(v, b0); }},
          {"gelu_chain",
           [&](Graph& g, Var v, Rng&, const Tensor&) { return tanh(matmul(gelu(add(v, g.constant(mix))), weights(g, wb))); }},
      };
      for (const auto& cs : cases) {
        const std::uint64_t wseed = rng.next_u64();
        auto f = [&](Graph& g, Var v) {
          Rng wr(wseed);
          return reduce(g, cs.f(g, v, wr, x), wr);
        };
        auto res = grad_check(f, x);
        INFO(cs.name << " trial " << t);
        CHECK(res.max_rel_error < 1e-5);
        worst = std::max(worst, res.max_rel_error);
      }
      // Dropout with a fixed mask per evaluation.
      {
        const std::uint64_t mseed = rng.next_u64();
        auto f = [&](Graph& g, Var v) {
          Rng mr(mseed);
          Var y = dropout(v, 0.3, mr);
          Rng wr(mseed + 1);
          return reduce(g, y, wr);
        };
        CHECK(grad_check(f, x).max_rel_error < 1e-5);
      }
    }
    MESSAGE("worst op grad-check error: " << worst);
  }

  TEST_CASE("gain and bias gradients of layernorm") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
      const std::size_t r = 1 + rng.below(4), c = 2 + rng.below(4);
      Tensor x = random_tensor(rng, {r, c});
      Tensor gain = random_tensor(rng, {c});
      Tensor bias = random_tensor(rng, {c});
      Tensor w = random_tensor(rng, {r, c});
      auto via_gain = [&](Graph& g, Var v) {
        return sum(mul(layernorm(g.constant(x), v, g.constant(bias)), g.constant(w)));
      };
      auto via_bias = [&](Graph& g, Var v) {
        return sum(mul(layernorm(g.constant(x), g.constant(gain), v), g.constant(w)));
      };
      CHECK(grad_check(via_gain, gain).max_rel_error < 1e-5);
      CHECK(grad_check(via_bias, bias).max_rel_error < 1e-5);
    }
  }

  TEST_CASE("conv1d gradients for input, weight and bias") {
    Rng rng(77);
    for (int t = 0; t < 100; ++t) {
      const std::size_t groups = 1 + rng.below(2);
      const std::size_t cin = groups * (1 + rng.below(2)), cout = groups * (1 + rng.below(2));
      const std::size_t k = 1 + rng.below(3), stride = 1 + rng.below(2);
      const std::size_t pl = rng.below(2), pr = rng.below(2);
      const std::size_t len = k + rng.below(5);
      Conv1dParams p{stride, pl, pr, groups};
      Tensor x = random_tensor(rng, {len, cin});
      Tensor w = random_tensor(rng, {cout, cin / groups, k});
      Tensor b = random_tensor(rng, {cout});
      const std::size_t out_len = (len + pl + pr - k) / stride + 1;
      Tensor m = random_tensor(rng, {out_len, cout});
      auto wrt_x = [&](Graph& g, Var v) { return sum(mul(conv1d(v, g.constant(w), g.constant(b), p), g.constant(m))); };
      auto wrt_w = [&](Graph& g, Var v) { return sum(mul(conv1d(g.constant(x), v, g.constant(b), p), g.constant(m))); };
      auto wrt_b = [&](Graph& g, Var v) { return sum(mul(conv1d(g.constant(x), g.constant(w), v, p), g.constant(m))); };
      INFO("trial " << t);
      CHECK(grad_check(wrt_x, x).max_rel_error < 1e-5);
      CHECK(grad_check(wrt_w, w).max_rel_error < 1e-5);
      CHECK(grad_check(wrt_b, b).max_rel_error < 1e-5);
    }
  }
}
