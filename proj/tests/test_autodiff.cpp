#include <doctest.h>

#include <cmath>

#include "icd/autodiff.hpp"
#include "icd/error.hpp"
#include "icd/rng.hpp"

using namespace icd;
using icd::ad::Graph;
using icd::ad::Var;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  CounterRng rng(seed, 99);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Non-trivial scalar reduction so every output coordinate gets a distinct
// weight in the check.
Var weighted_sum(Var x, std::uint64_t seed) {
  Graph& g = *x.graph;
  Tensor w = random_tensor(x.shape(), seed + 1000);
  return ad::sum(ad::mul(x, g.constant(std::move(w))));
}

void expect_tensor(const Tensor& t, std::initializer_list<double> want, double tol = 0.0) {
  REQUIRE(t.size() == want.size());
  std::size_t i = 0;
  for (double w : want) CHECK(std::abs(t[i++] - w) <= tol);
}

}  // namespace

TEST_CASE("tensor construction and shape rules") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 1.5);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  t.set_requires_grad(true);
  CHECK(t.grad().size() == 6);
}

TEST_CASE("matmul examples") {
  Graph g;
  auto r = ad::matmul(g.constant(Tensor::matrix({{1, 0}, {0, 1}})), g.constant(Tensor::matrix({{3, 4}, {5, 6}})));
  expect_tensor(r.value(), {3, 4, 5, 6});
  auto r2 = ad::matmul(g.constant(Tensor::matrix({{1, 2}})), g.constant(Tensor::matrix({{3}, {4}})));
  expect_tensor(r2.value(), {11});
  auto r3 = ad::matmul(g.constant(Tensor({2, 3})), g.constant(random_tensor({3, 2}, 1)));
  expect_tensor(r3.value(), {0, 0, 0, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  try {
    ad::matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3})));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("conv1d examples") {
  Graph g;
  Tensor x({3, 1}, std::vector<double>{1, 2, 3});
  Tensor w({2, 1, 1}, std::vector<double>{1, 1});
  auto y = ad::conv1d(g.constant(x), g.constant(w), g.constant(Tensor({1})), ad::Padding::kValid);
  expect_tensor(y.value(), {3, 5});

  Tensor delta({1, 1, 1}, std::vector<double>{1});
  auto id = ad::conv1d(g.constant(x), g.constant(delta), g.constant(Tensor({1})), ad::Padding::kSame);
  CHECK(id.value() == x);

  Tensor x2 = random_tensor({4, 2}, 3);
  Tensor b({3}, std::vector<double>{0.5, -1, 2});
  auto bo = ad::conv1d(g.constant(x2), g.constant(Tensor({3, 2, 3})), g.constant(b), ad::Padding::kSame);
  CHECK(bo.shape() == Shape{4, 3});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) CHECK(bo.value()(t, c) == b[c]);

  CHECK_THROWS_AS(ad::conv1d(g.constant(x), g.constant(Tensor({5, 1, 1})), g.constant(Tensor({1})),
                             ad::Padding::kValid),
                  DimensionError);
  // Same padding with L=1 and k=3 still yields one position.
  auto one = ad::conv1d(g.constant(Tensor({1, 1}, std::vector<double>{2})), g.constant(Tensor({3, 1, 1}, 1.0)),
                        g.constant(Tensor({1})), ad::Padding::kSame);
  expect_tensor(one.value(), {2});
}

TEST_CASE("elementwise activations") {
  Graph g;
  auto x = g.constant(Tensor::vector({-1, 0, 2}));
  expect_tensor(ad::relu(x).value(), {0, 0, 2});
  CHECK(ad::relu(ad::relu(x)).value() == ad::relu(x).value());
  expect_tensor(ad::sigmoid(g.constant(Tensor::scalar(0))).value(), {0.5});
  expect_tensor(ad::tanh(g.constant(Tensor::scalar(0))).value(), {0.0});

  auto big = ad::sigmoid(g.constant(Tensor::vector({-1000, 1000})));
  CHECK(big.value()[0] > 0.0);
  CHECK(big.value()[1] < 1.0);

  CounterRng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-30, 30);
    CHECK(std::abs(kernels::sigmoid(-v) - (1.0 - kernels::sigmoid(v))) < 1e-12);
  }
}

TEST_CASE("softmax examples and properties") {
  Graph g;
  expect_tensor(ad::softmax(g.constant(Tensor::vector({0, 0}))).value(), {0.5, 0.5});
  expect_tensor(ad::softmax(g.constant(Tensor::vector({1000, 1000}))).value(), {0.5, 0.5});
  expect_tensor(ad::softmax(g.constant(Tensor::vector({0, std::log(3.0)}))).value(), {0.25, 0.75}, 1e-15);

  for (std::uint64_t s = 0; s < 20; ++s) {
    Tensor x = random_tensor({3, 7}, s, -20, 20);
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += 123.25;
    auto a = ad::softmax(g.constant(x)).value();
    auto b = ad::softmax(g.constant(shifted)).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        sum += a(r, c);
        CHECK(std::abs(a(r, c) - b(r, c)) < 1e-9);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cross entropy examples") {
  Graph g;
  Tensor uniform({1, 50}, 1.0 / 50);
  Tensor onehot({1, 50});
  onehot(0, 7) = 1;
  CHECK(ad::cross_entropy(g.constant(uniform), onehot).value()[0] == doctest::Approx(std::log(50.0)).epsilon(1e-12));
  CHECK(ad::cross_entropy(g.constant(onehot), onehot).value()[0] == doctest::Approx(0.0));
  auto v = ad::cross_entropy(g.constant(Tensor::matrix({{0.25, 0.75}})), Tensor::matrix({{0, 1}}));
  CHECK(v.value()[0] == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK_THROWS_AS(ad::cross_entropy(g.constant(Tensor::matrix({{0.5, 0.5}})), Tensor::matrix({{1, 1}})),
                  ValidationError);
  CHECK_THROWS_AS(ad::cross_entropy(g.constant(Tensor::matrix({{0.5, 0.5}})), Tensor::matrix({{0.5, 0.5}})),
                  ValidationError);
}

TEST_CASE("binary cross entropy examples") {
  Graph g;
  Tensor half({2, 3}, 0.5);
  Tensor y = Tensor::matrix({{1, 0, 1}, {0, 0, 1}});
  CHECK(ad::binary_cross_entropy(g.constant(half), y).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ad::binary_cross_entropy(g.constant(y), y).value()[0] == doctest::Approx(0.0));
  auto v = ad::binary_cross_entropy(g.constant(Tensor::matrix({{0.9, 0.2}})), Tensor::matrix({{1, 0}}));
  CHECK(v.value()[0] == doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(ad::binary_cross_entropy(g.constant(half), Tensor({2, 3}, 0.3)), ValidationError);
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::vector({3, -2});
  x.set_requires_grad(true);
  {
    Graph g;
    g.backward(ad::sum(g.parameter(x)));
  }
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1});

  Tensor y = Tensor::vector({1, 2});
  y.set_requires_grad(true);
  {
    Graph g;
    auto p = g.parameter(y);
    g.backward(ad::sum(ad::mul(p, p)));
  }
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, 4});

  // A second backward without reset accumulates.
  {
    Graph g;
    auto p = g.parameter(y);
    g.backward(ad::sum(ad::mul(p, p)));
  }
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{4, 8});

  Graph g;
  CHECK_THROWS_AS(g.backward(g.parameter(y)), ValidationError);
}

TEST_CASE("backward is deterministic across resets") {
  Tensor w = random_tensor({4, 3}, 11);
  Tensor x = random_tensor({5, 4}, 12);
  w.set_requires_grad(true);
  auto run = [&] {
    w.zero_grad();
    Graph g;
    auto out = ad::softmax(ad::tanh(ad::matmul(g.constant(x), g.parameter(w))));
    g.backward(weighted_sum(out, 3));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
}

TEST_CASE("no-grad graphs skip closures and leave params untouched") {
  Tensor w = random_tensor({2, 2}, 1);
  w.set_requires_grad(true);
  Graph g(false);
  auto out = ad::sum(ad::matmul(g.parameter(w), g.parameter(w)));
  CHECK_FALSE(g.needs_grad(out.id));
}

TEST_CASE("grad_check: linear map is exact") {
  Tensor w = random_tensor({3, 4}, 21);
  Tensor x = random_tensor({2, 3}, 22);
  auto r = ad::grad_check([&](Graph& g) { return weighted_sum(ad::matmul(g.constant(x), g.parameter(w)), 1); }, {&w});
  CHECK(r.checked == 12);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("grad_check: softmax + cross entropy composite") {
  Tensor w = random_tensor({4, 5}, 31);
  Tensor b = random_tensor({5}, 32);
  Tensor x = random_tensor({3, 4}, 33);
  Tensor y({3, 5});
  y(0, 1) = y(1, 4) = y(2, 0) = 1;
  auto r = ad::grad_check(
      [&](Graph& g) {
        auto logits = ad::add_bias(ad::matmul(g.constant(x), g.parameter(w)), g.parameter(b));
        return ad::cross_entropy(ad::softmax(logits), y);
      },
      {&w, &b});
  CHECK(r.checked == 25);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: every op at 100 probes") {
  // Each builder exercises one op between a random parameter and a weighted
  // scalar readout.
  struct Case {
    const char* name;
    Shape shape;
    std::function<Var(Graph&, Var)> op;
  };
  Tensor other = random_tensor({4, 5}, 40);
  Tensor rhs = random_tensor({5, 3}, 41);
  Tensor bias = random_tensor({5}, 42);
  Tensor kernel = random_tensor({3, 5, 2}, 43);
  Tensor kbias = random_tensor({2}, 44);
  Tensor bin = Tensor::matrix({{1, 0, 1, 0, 0}, {0, 1, 0, 0, 1}, {1, 1, 0, 0, 0}, {0, 0, 0, 1, 0}});
  Tensor hot({4, 5});
  hot(0, 2) = hot(1, 0) = hot(2, 4) = hot(3, 3) = 1;
  std::vector<Case> cases = {
      {"matmul", {4, 5}, [&](Graph& g, Var p) { return ad::matmul(p, g.constant(rhs)); }},
      {"transpose", {4, 5}, [&](Graph&, Var p) { return ad::transpose(p); }},
      {"add", {4, 5}, [&](Graph& g, Var p) { return ad::add(p, g.constant(other)); }},
      {"sub", {4, 5}, [&](Graph& g, Var p) { return ad::sub(g.constant(other), p); }},
      {"mul", {4, 5}, [&](Graph& g, Var p) { return ad::mul(p, g.constant(other)); }},
      {"add_bias", {4, 5}, [&](Graph& g, Var p) { return ad::add_bias(p, g.constant(bias)); }},
      {"scale", {4, 5}, [&](Graph&, Var p) { return ad::scale(p, -2.5); }},
      {"sum", {4, 5}, [&](Graph&, Var p) { return ad::scale(ad::sum(ad::mul(p, p)), 0.5); }},
      {"mean", {4, 5}, [&](Graph&, Var p) { return ad::mean(ad::mul(p, p)); }},
      {"row_sum", {4, 5}, [&](Graph&, Var p) { return ad::row_sum(p); }},
      {"mean_rows", {4, 5}, [&](Graph&, Var p) { return ad::mean_rows(p); }},
      {"select_row", {4, 5}, [&](Graph&, Var p) { return ad::select_row(p, 2); }},
      {"concat_cols", {4, 5}, [&](Graph& g, Var p) { return ad::concat_cols({p, g.constant(other), p}); }},
      {"stack_rows", {4, 5}, [&](Graph&, Var p) { return ad::stack_rows({ad::select_row(p, 1), ad::select_row(p, 3)}); }},
      {"reshape", {4, 5}, [&](Graph&, Var p) { return ad::reshape(p, {2, 10}); }},
      {"conv1d_same", {4, 5},
       [&](Graph& g, Var p) { return ad::conv1d(p, g.constant(kernel), g.constant(kbias), ad::Padding::kSame); }},
      {"conv1d_valid", {4, 5},
       [&](Graph& g, Var p) { return ad::conv1d(p, g.constant(kernel), g.constant(kbias), ad::Padding::kValid); }},
      {"conv1d_weight", {3, 5, 2},
       [&](Graph& g, Var p) { return ad::conv1d(g.constant(other), p, g.constant(kbias), ad::Padding::kSame); }},
      {"relu", {4, 5}, [&](Graph&, Var p) { return ad::relu(p); }},
      {"sigmoid", {4, 5}, [&](Graph&, Var p) { return ad::sigmoid(ad::scale(p, 3)); }},
      {"tanh", {4, 5}, [&](Graph&, Var p) { return ad::tanh(ad::scale(p, 2)); }},
      {"softmax", {4, 5}, [&](Graph&, Var p) { return ad::softmax(ad::scale(p, 2)); }},
      {"cross_entropy", {4, 5}, [&](Graph&, Var p) { return ad::cross_entropy(ad::softmax(p), hot); }},
      {"binary_cross_entropy", {4, 5},
       [&](Graph&, Var p) { return ad::binary_cross_entropy(ad::sigmoid(p), bin); }},
  };
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    auto& c = cases[ci];
    CAPTURE(c.name);
    std::size_t checked = 0;
    double worst = 0;
    // Fresh random points until 100 probes are accumulated.
    for (std::uint64_t seed = 0; checked < 100; ++seed) {
      Tensor p = random_tensor(c.shape, 500 + 97 * ci + seed);
      auto r = ad::grad_check(
          [&](Graph& g) {
            Var out = c.op(g, g.parameter(p));
            return out.value().size() == 1 ? out : weighted_sum(out, ci);
          },
          {&p});
      checked += r.checked;
      worst = std::max(worst, r.max_rel_error);
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("grad_check reports kinks and non-finite probes") {
  Tensor p = Tensor::vector({1e-7, 1.0});
  auto r = ad::grad_check([&](Graph& g) { return ad::sum(ad::relu(g.parameter(p))); }, {&p});
  CHECK(r.skipped_nonsmooth == 1);
  CHECK(r.checked == 1);

  Tensor q = Tensor::vector({1.0});
  CHECK_THROWS_AS(ad::grad_check(
                      [&](Graph& g) {
                        Var v = g.parameter(q);
                        Tensor out({1}, std::vector<double>{q[0] > 1.0 ? INFINITY : q[0]});
                        return g.push(ad::OpKind::kConstant, out, {v.id}, nullptr);
                      },
                      {&q}),
                  ProbeError);
}
