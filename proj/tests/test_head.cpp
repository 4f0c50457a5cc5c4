#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "icd/clf_head.hpp"
#include "icd/error.hpp"
#include "icd/rng.hpp"

using namespace icd;
using namespace icd::head;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  CounterRng rng(seed, 7);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

}  // namespace

TEST_CASE("head forward examples") {
  ad::Graph g(false);
  auto z = HeadParams::zeros(3, 4, HeadMode::kSoftmaxCe);
  auto p = head_forward(g.constant(Tensor::vector({1, 2, 3})), z).value();
  for (double v : p.data()) CHECK(v == 0.25);

  auto eye = HeadParams::zeros(4, 4, HeadMode::kSoftmaxCe);
  for (std::size_t i = 0; i < 4; ++i) eye.W_h(i, i) = 1.0;
  CHECK(argmax(head_forward(g.constant(Tensor::vector({0, 0, 1, 0})), eye).value()) == 2);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = HeadParams::init(6, 9, HeadMode::kSoftmaxCe, seed);
    const auto probs = head_forward(g.constant(random_tensor({6}, seed, -4, 4)), r).value();
    double s = 0;
    for (double v : probs.data()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  auto logit = HeadParams::init(6, 3, HeadMode::kSigmoidBce, 1);
  const Tensor h = random_tensor({6}, 2);
  const auto raw = head_forward(g.constant(h), logit).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double want = logit.b[c];
    for (std::size_t j = 0; j < 6; ++j) want += logit.W_h(c, j) * h[j];
    CHECK(std::abs(raw[c] - want) < 1e-14);
  }
  CHECK_THROWS_AS(head_forward(g.constant(Tensor({5})), logit), ValidationError);
}

TEST_CASE("argmax is shift invariant") {
  ad::Graph g(false);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = HeadParams::init(5, 7, HeadMode::kSoftmaxCe, seed);
    const Tensor h = random_tensor({5}, 50 + seed, -3, 3);
    const auto before = argmax(head_forward(g.constant(h), p).value());
    for (auto& b : p.b.data()) b += 3.7;
    CHECK(argmax(head_forward(g.constant(h), p).value()) == before);
  }
}

TEST_CASE("head loss examples") {
  ad::Graph g(false);
  auto z = HeadParams::zeros(4, 50, HeadMode::kSoftmaxCe);
  auto probs = ad::reshape(head_forward(g.constant(Tensor({4})), z), {1, 50});
  Tensor onehot({1, 50});
  onehot[17] = 1.0;
  CHECK(std::abs(head_loss(probs, onehot, z).value()[0] - std::log(50.0)) < 1e-12);

  Tensor multi({1, 50});
  multi[3] = multi[4] = 1.0;
  CHECK_THROWS_AS(head_loss(probs, multi, z), ValidationError);

  auto s = HeadParams::zeros(2, 3, HeadMode::kSigmoidBce);
  Tensor gold({1, 3}, std::vector<double>{1, 0, 1});
  auto perfect = g.constant(Tensor({1, 3}, std::vector<double>{40, -40, 40}));
  const double loss = head_loss(perfect, gold, s).value()[0];
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-12);
  auto wrong = g.constant(Tensor({1, 3}, std::vector<double>{-1, 1, 0}));
  CHECK(head_loss(wrong, gold, s).value()[0] > 0.1);

  CHECK(parse_mode(mode_name(HeadMode::kSigmoidBce)) == HeadMode::kSigmoidBce);
  CHECK_THROWS_AS(parse_mode("hinge"), ValidationError);
}

TEST_CASE("softmax cross-entropy gradient is (p - y) / N") {
  const std::size_t n = 4, c = 6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor z = random_tensor({n, c}, 80 + seed, -3, 3);
    z.set_requires_grad(true);
    Tensor y({n, c});
    CounterRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) y(i, rng.below(c)) = 1.0;

    ad::Graph g;
    auto probs = ad::softmax(g.parameter(z));
    g.backward(ad::cross_entropy(probs, y));
    for (std::size_t i = 0; i < n * c; ++i) {
      const double want = (probs.value()[i] - y[i]) / static_cast<double>(n);
      CHECK(std::abs(z.grad()[i] - want) < 1e-10);
    }
  }
}
