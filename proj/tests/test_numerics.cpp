#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "doctest.h"
#include "leaffed/grad_check.hpp"
#include "leaffed/optimizer.hpp"
#include "leaffed/tape.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace leaffed;
using leaffed::testing::bitwise_equal;
using leaffed::testing::random_tensor;
using leaffed::testing::finite_difference;
using leaffed::testing::max_rel_err;
using leaffed::testing::primitive_gradient_error;

namespace {

}  // namespace

TEST_SUITE("dense") {
  TEST_CASE("worked example") {
    Tape<float> t;
    const Var x = t.constant(Tensor({1, 2}, {1, 0}));
    const Var w = t.constant(Tensor({2, 2}, {2, 3, 4, 5}));
    const Var b = t.constant(Tensor({2}, {1, 1}));
    CHECK(t.value(ops::dense(t, x, w, b)) == Tensor({1, 2}, {3, 4}));
  }

  TEST_CASE("identity weight and zero bias pass the input through") {
    Rng rng(3);
    Tape<float> t;
    const auto xv = random_tensor<float>({4, 3}, rng);
    const Var x = t.constant(xv);
    const Var w = t.constant(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    const Var b = t.constant(Tensor({3}));
    CHECK(bitwise_equal(t.value(ops::dense(t, x, w, b)), xv));
  }

  TEST_CASE("shape mismatch names both shapes") {
    Tape<float> t;
    const Var x = t.constant(Tensor({2, 3}));
    const Var w = t.constant(Tensor({4, 5}));
    const Var b = t.constant(Tensor({5}));
    try {
      ops::dense(t, x, w, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(2, 3)") != std::string::npos);
      CHECK(msg.find("(4, 5)") != std::string::npos);
    }
  }

  TEST_CASE("backward gives dW = x^T G, dx = G W^T, db = colsum(G)") {
    Rng rng(11);
    const auto xv = random_tensor<double>({3, 4}, rng);
    const auto wv = random_tensor<double>({4, 2}, rng);
    const auto bv = random_tensor<double>({2}, rng);
    const auto gv = random_tensor<double>({3, 2}, rng);
    Tape<double> t;
    const Var x = t.variable(xv), w = t.variable(wv), b = t.variable(bv);
    t.backward(ops::dot(t, ops::dense(t, x, w, b), gv));

    Tensor64 dw({4, 2}), dx({3, 4}), db({2});
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
          dw.at(k, j) += xv.at(i, k) * gv.at(i, j);
          dx.at(i, k) += gv.at(i, j) * wv.at(k, j);
        }
      }
      for (std::size_t j = 0; j < 2; ++j) db[j] += gv.at(i, j);
    }
    CHECK(max_rel_err(t.grad(w), dw) < 1e-12);
    CHECK(max_rel_err(t.grad(x), dx) < 1e-12);
    CHECK(max_rel_err(t.grad(b), db) < 1e-12);

    auto forward = [&](const std::vector<Tensor64>& ps) {
      Tape<double> f;
      return f.value(ops::dot(f, ops::dense(f, f.constant(ps[0]), f.constant(ps[1]), f.constant(ps[2])), gv))[0];
    };
    const auto numeric = finite_difference(forward, {xv, wv, bv});
    CHECK(max_rel_err(t.grad(x), numeric[0]) < 1e-4);
    CHECK(max_rel_err(t.grad(w), numeric[1]) < 1e-4);
    CHECK(max_rel_err(t.grad(b), numeric[2]) < 1e-4);
  }
}

TEST_SUITE("relu") {
  TEST_CASE("definition and mask") {
    Tape<float> t;
    const Var x = t.variable(Tensor({3}, {-1, 0, 2}));
    const Var y = ops::relu(t, x);
    CHECK(t.value(y) == Tensor({3}, {0, 0, 2}));

    Tape<float> pos;
    const auto pv = Tensor({3}, {0.5f, 1, 2});
    CHECK(pos.value(ops::relu(pos, pos.constant(pv))) == pv);

    Tape<float> g;
    const Var gx = g.variable(Tensor({2}, {-1, 2}));
    g.backward(ops::dot(g, ops::relu(g, gx), Tensor({2}, {5, 7})));
    CHECK(g.grad(gx) == Tensor({2}, {0, 7}));
  }

  TEST_CASE("subgradient at exactly zero is zero") {
    Tape<float> t;
    const Var x = t.variable(Tensor({1}, {0}));
    t.backward(ops::sum(t, ops::relu(t, x)));
    CHECK(t.grad(x)[0] == 0.0f);
  }
}

TEST_SUITE("concat") {
  TEST_CASE("definition, empty operand and split backward") {
    Tape<float> t;
    const Var a = t.variable(Tensor({1, 2}, {1, 2}));
    const Var b = t.variable(Tensor({1, 1}, {3}));
    const Var c = ops::concat(t, a, b);
    CHECK(t.value(c) == Tensor({1, 3}, {1, 2, 3}));
    t.backward(ops::sum(t, c));
    CHECK(t.grad(a) == Tensor({1, 2}, {1, 1}));
    CHECK(t.grad(b) == Tensor({1, 1}, {1}));

    Tape<float> e;
    const auto av = Tensor({2, 2}, {1, 2, 3, 4});
    CHECK(e.value(ops::concat(e, e.constant(av), e.constant(Tensor({2, 0})))) == av);
  }

  TEST_CASE("leading dimension mismatch is an error") {
    Tape<float> t;
    CHECK_THROWS_AS(ops::concat(t, t.constant(Tensor({2, 2})), t.constant(Tensor({3, 1}))), ShapeError);
  }
}

TEST_SUITE("repeat_vector") {
  TEST_CASE("shape and identical timesteps") {
    Rng rng(5);
    Tape<float> t;
    const auto xv = random_tensor<float>({2, 3}, rng);
    const Var y = ops::repeat_vector(t, t.constant(xv), 4);
    const auto& yv = t.value(y);
    CHECK(yv.shape() == Shape{2, 4, 3});
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t d = 0; d < 3; ++d) CHECK(yv[(i * 4 + r) * 3 + d] == xv[i * 3 + d]);

    Tape<float> one;
    const Var y1 = ops::repeat_vector(one, one.constant(xv), 1);
    CHECK(one.value(y1).values() == xv.values());
  }

  TEST_CASE("backward of ones sums to r") {
    Tape<float> t;
    const Var x = t.variable(Tensor({1, 3}, {1, 2, 3}));
    t.backward(ops::sum(t, ops::repeat_vector(t, x, 4)));
    CHECK(t.grad(x) == Tensor({1, 3}, {4, 4, 4}));
  }

  TEST_CASE("zero repeats is an error") {
    Tape<float> t;
    CHECK_THROWS_AS(ops::repeat_vector(t, t.constant(Tensor({1, 2})), 0), ValidationError);
  }

  TEST_CASE("backward equals the r-fold sum of out-grads exactly") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(9), r = 1 + rng.below(6);
      const auto g = random_tensor<float>({n, r, d}, rng);
      Tape<float> t;
      const Var x = t.variable(random_tensor<float>({n, d}, rng));
      t.backward(ops::dot(t, ops::repeat_vector(t, x, r), g));
      Tensor want({n, d});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < r; ++s)
          for (std::size_t k = 0; k < d; ++k) want[i * d + k] = want[i * d + k] + g[(i * r + s) * d + k];
      REQUIRE(bitwise_equal(t.grad(x), want));
    }
  }
}

TEST_SUITE("softmax cross-entropy") {
  TEST_CASE("uniform logits give ln C") {
    for (std::size_t classes : {2u, 5u, 8u}) {
      Tape<double> t;
      const auto y = onehot_rows<double>(std::vector<int>{0, 1}, classes);
      const Var l = ops::softmax_cross_entropy(t, t.constant(Tensor64({2, classes})), y);
      CHECK(t.value(l)[0] == doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-12));
    }
  }

  TEST_CASE("saturated true class gives near-zero loss") {
    Tape<double> t;
    Tensor64 logits({1, 4});
    logits[2] = 30.0;
    const Var l = ops::softmax_cross_entropy(t, t.constant(logits), onehot_rows<double>(std::vector<int>{2}, 4));
    CHECK(t.value(l)[0] < 1e-9);
    CHECK(t.value(l)[0] >= 0.0);
  }

  TEST_CASE("gradient equals (softmax - onehot) / n") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.below(5), c = 2 + rng.below(6);
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(rng.below(c));
      const auto y = onehot_rows<double>(labels, c);
      const auto lv = random_tensor<double>({n, c}, rng, -3, 3);
      Tape<double> t;
      const Var logits = t.variable(lv);
      t.backward(ops::softmax_cross_entropy(t, logits, y));
      const auto p = softmax_rows(lv);
      Tensor64 want({n, c});
      for (std::size_t i = 0; i < want.size(); ++i) want[i] = (p[i] - y[i]) / static_cast<double>(n);
      CHECK(max_rel_err(t.grad(logits), want) < 1e-12);

      auto forward = [&](const std::vector<Tensor64>& ps) {
        Tape<double> f;
        return f.value(ops::softmax_cross_entropy(f, f.constant(ps[0]), y))[0];
      };
      CHECK(max_rel_err(t.grad(logits), finite_difference(forward, {lv})[0]) < 1e-4);
    }
  }

  TEST_CASE("non one-hot targets are rejected") {
    Tape<float> t;
    const Var l = t.constant(Tensor({1, 3}));
    CHECK_THROWS_AS(ops::softmax_cross_entropy(t, l, Tensor({1, 3}, {1, 1, 0})), ValidationError);
    CHECK_THROWS_AS(ops::softmax_cross_entropy(t, l, Tensor({1, 3}, {0.5f, 0.5f, 0})), ValidationError);
    CHECK_THROWS_AS(ops::softmax_cross_entropy(t, l, Tensor({1, 3}, {0, 0, 0})), ValidationError);
  }

  TEST_CASE("softmax rows sum to one and loss is non-negative") {
    Rng rng(29);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(6), c = 2 + rng.below(9);
      const auto lv = random_tensor<float>({n, c}, rng, -20, 20);
      const auto p = softmax_rows(lv);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += p[i * c + j];
        REQUIRE(std::abs(s - 1.0) < 1e-6);
      }
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(rng.below(c));
      Tape<float> t;
      REQUIRE(t.value(ops::softmax_cross_entropy(t, t.constant(lv), onehot_rows<float>(labels, c)))[0] >= 0.0f);
    }
  }
}

TEST_CASE("every primitive matches central differences on 100 random inputs") {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(3), d = 1 + rng.below(5), h = 1 + rng.below(5);
    worst = std::max(worst, primitive_gradient_error(
                                [](Tape<double>& t, const std::vector<Var>& v) { return ops::dense(t, v[0], v[1], v[2]); },
                                {random_tensor<double>({n, d}, rng), random_tensor<double>({d, h}, rng),
                                 random_tensor<double>({h}, rng)},
                                rng));
    // Keep relu inputs away from the kink at 0.
    auto rx = random_tensor<double>({n, d}, rng, 0.05, 1.0);
    for (std::size_t i = 0; i < rx.size(); ++i) if (rng.coin()) rx[i] = -rx[i];
    worst = std::max(worst, primitive_gradient_error(
                                [](Tape<double>& t, const std::vector<Var>& v) { return ops::relu(t, v[0]); }, {rx}, rng));
    worst = std::max(worst, primitive_gradient_error(
                                [](Tape<double>& t, const std::vector<Var>& v) { return ops::concat(t, v[0], v[1]); },
                                {random_tensor<double>({n, d}, rng), random_tensor<double>({n, h}, rng)}, rng));
    const std::size_t r = 1 + rng.below(4);
    worst = std::max(worst, primitive_gradient_error(
                                [r](Tape<double>& t, const std::vector<Var>& v) { return ops::repeat_vector(t, v[0], r); },
                                {random_tensor<double>({n, d}, rng)}, rng));
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(h + 1));
    const auto y = onehot_rows<double>(labels, h + 1);
    worst = std::max(worst, primitive_gradient_error(
                                [&y](Tape<double>& t, const std::vector<Var>& v) { return ops::softmax_cross_entropy(t, v[0], y); },
                                {random_tensor<double>({n, h + 1}, rng, -2, 2)}, rng));
    const std::size_t side = 2 + rng.below(3), cin = 1 + rng.below(2), cout = 1 + rng.below(3);
    worst = std::max(worst, primitive_gradient_error(
                                [](Tape<double>& t, const std::vector<Var>& v) { return ops::conv3x3(t, v[0], v[1], v[2]); },
                                {random_tensor<double>({1, side, side + 1, cin}, rng), random_tensor<double>({9 * cin, cout}, rng),
                                 random_tensor<double>({cout}, rng)},
                                rng));
    worst = std::max(worst, primitive_gradient_error(
                                [](Tape<double>& t, const std::vector<Var>& v) { return ops::avg_pool2(t, v[0]); },
                                {random_tensor<double>({1, 2 * side, 2 * side + 1, cin}, rng)}, rng));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("backward visits operations in exact reverse recording order") {
  Rng rng(7);
  Tape<double> t;
  const Var x = t.variable(random_tensor<double>({2, 3}, rng));
  const Var w = t.variable(random_tensor<double>({3, 3}, rng));
  const Var b = t.variable(random_tensor<double>({3}, rng));
  const Var h = ops::relu(t, ops::dense(t, x, w, b));
  const Var c = ops::concat(t, x, h);
  const Var out = ops::sum(t, ops::repeat_vector(t, c, 2));
  t.backward(out);
  const auto& order = t.last_backward_order();
  REQUIRE(order.size() == 5);
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i] < order[i - 1]);
  CHECK(order.front() == out.id);
  CHECK(t.grad(w).shape() == t.value(w).shape());
}

TEST_SUITE("optimizers") {
  TEST_CASE("sgd worked examples") {
    std::vector<Tensor64> p{Tensor64({1}, {1.0})};
    const std::vector<Tensor64> g{Tensor64({1}, {0.5})};
    sgd_step<double>(p, g, 0.1);
    CHECK(p[0][0] == doctest::Approx(0.95).epsilon(1e-15));

    std::vector<Tensor> q{Tensor({2}, {1.5f, -2.0f})};
    const auto before = q[0];
    sgd_step<float>(q, std::vector<Tensor>{Tensor({2})}, 0.1f);
    CHECK(q[0] == before);
    sgd_step<float>(q, std::vector<Tensor>{Tensor({2}, {3, 4})}, 0.0f);
    CHECK(q[0] == before);
  }

  TEST_CASE("non-finite gradient names the parameter") {
    std::vector<Tensor> p{Tensor({1}), Tensor({2})};
    const std::vector<Tensor> g{Tensor({1}), Tensor({2}, {0, std::numeric_limits<float>::quiet_NaN()})};
    const std::vector<std::string> names{"dense0.weight", "dense0.bias"};
    try {
      sgd_step<float>(p, g, 0.1f, names);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("dense0.bias") != std::string::npos);
    }
    OptimizerState<float> adam;
    CHECK_THROWS_AS(adam_step<float>(p, g, adam, names), NumericError);
  }

  TEST_CASE("adam first step moves by the learning rate") {
    std::vector<Tensor64> p{Tensor64({1}, {0.0})};
    OptimizerState<double> state;
    adam_step<double>(p, std::vector<Tensor64>{Tensor64({1}, {1.0})}, state);
    CHECK(p[0][0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(state.step == 1);
    CHECK(state.first_moment[0].shape() == p[0].shape());
    CHECK(state.second_moment[0].shape() == p[0].shape());
  }

  TEST_CASE("adam with zero gradients leaves parameters fixed") {
    std::vector<Tensor> p{Tensor({3}, {1, 2, 3})};
    const auto before = p[0];
    OptimizerState<float> state;
    for (int i = 0; i < 50; ++i) adam_step<float>(p, std::vector<Tensor>{Tensor({3})}, state);
    CHECK(p[0] == before);
    CHECK(state.step == 50);
  }

  TEST_CASE("adam on (p-3)^2 matches a scalar simulation and converges") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    OptimizerState<double> state(cfg);
    std::vector<Tensor64> p{Tensor64({1}, {0.0})};
    // Oracle: textbook bias-corrected Adam on a scalar.
    double q = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
      adam_step<double>(p, std::vector<Tensor64>{Tensor64({1}, {2.0 * (p[0][0] - 3.0)})}, state);
      const double g = 2.0 * (q - 3.0);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      q -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(std::abs(p[0][0] - q) < 1e-9);
    CHECK(std::abs(p[0][0] - 3.0) < 0.05);
  }

  TEST_CASE("steps are deterministic functions of params, grads and state") {
    Rng rng(9);
    const std::vector<Tensor> p0{random_tensor<float>({4, 5}, rng), random_tensor<float>({5}, rng)};
    const std::vector<Tensor> g{random_tensor<float>({4, 5}, rng), random_tensor<float>({5}, rng)};
    for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
      OptimizerConfig cfg;
      cfg.kind = kind;
      OptimizerState<float> s1(cfg), s2(cfg);
      auto a = p0, b = p0;
      for (int i = 0; i < 3; ++i) {
        optimizer_step<float>(a, g, s1);
        optimizer_step<float>(b, g, s2);
      }
      CHECK(bitwise_equal(a[0], b[0]));
      CHECK(bitwise_equal(a[1], b[1]));
      CHECK(s1 == s2);
      CHECK(s1.step == 3);
    }
  }

  TEST_CASE("adam rejects sgd state") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    OptimizerState<float> state(cfg);
    std::vector<Tensor> p{Tensor({1})};
    CHECK_THROWS_AS(adam_step<float>(p, std::vector<Tensor>{Tensor({1})}, state), ValidationError);
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("linear function is exact") {
    Rng rng(31);
    const auto coeffs = random_tensor<double>({3, 4}, rng);
    const std::vector<Tensor64> params{random_tensor<double>({3, 4}, rng)};
    const auto report = grad_check(
        [&](Tape<double>& t, std::span<const Var> v) { return ops::dot(t, v[0], coeffs); }, params);
    CHECK(report.max_relative_error < 1e-10);
    CHECK(report.coordinates_checked == 12);
    CHECK(report.passed);
  }

  TEST_CASE("constant function has zero gradient both ways") {
    const std::vector<Tensor64> params{Tensor64({2, 2}, {1, 2, 3, 4})};
    const auto report = grad_check(
        [](Tape<double>& t, std::span<const Var>) { return t.constant(Tensor64({1}, {5.0})); }, params);
    CHECK(report.max_relative_error == 0.0);
    CHECK(report.max_absolute_error == 0.0);
  }

  TEST_CASE("a wrong gradient is reported") {
    // relu evaluated exactly on its kink: the tape says 0, differences say 0.5.
    const std::vector<Tensor64> params{Tensor64({1}, {0.0})};
    const auto report = grad_check(
        [](Tape<double>& t, std::span<const Var> v) { return ops::sum(t, ops::relu(t, v[0])); }, params);
    CHECK_FALSE(report.passed);
  }
}
