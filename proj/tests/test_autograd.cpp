#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmnet/gradcheck.hpp"
#include "mmnet/ops.hpp"
#include "mmnet/rng.hpp"

using namespace mmnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, bool rg = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_vector(std::move(shape), std::move(v), rg);
}

}  // namespace

TEST_CASE("backward of sum(x) is all ones") {
  Rng rng(1);
  Tensor x = rand_tensor({3, 4, 2}, rng);
  sum(x).backward();
  auto g = x.grad();
  REQUIRE(g.size() == 24);
  for (double v : g) CHECK(v == 1.0);
}

TEST_CASE("backward of sum(x*x)/2 reproduces x") {
  Rng rng(2);
  Tensor x = rand_tensor({5, 5}, rng);
  Tensor loss = mul_scalar(sum(mul(x, x)), 0.5);
  loss.backward();
  auto g = x.grad();
  for (int i = 0; i < x.numel(); ++i)
    CHECK(g[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
}

TEST_CASE("a tensor consumed twice accumulates both contributions") {
  // y = x*x + x  =>  dy/dx = 2x + 1
  Rng rng(3);
  Tensor x = rand_tensor({4}, rng);
  Tensor loss = sum(add(mul(x, x), x));
  loss.backward();
  auto g = x.grad();
  for (int i = 0; i < 4; ++i)
    CHECK(g[i] == doctest::Approx(2.0 * x.data()[i] + 1.0).epsilon(1e-12));
}

TEST_CASE("backward is rejected on non-scalar outputs and constant graphs") {
  Rng rng(4);
  Tensor x = rand_tensor({3, 3}, rng);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(y.backward(), AutogradError);
  Tensor c = Tensor::full({1}, 2.0);  // no gradients anywhere
  CHECK_THROWS_AS(c.backward(), AutogradError);
}

TEST_CASE("second backward on a consumed graph throws") {
  Rng rng(5);
  Tensor x = rand_tensor({4}, rng);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), AutogradError);
}

TEST_CASE("reusing a consumed subgraph in a new backward throws") {
  Rng rng(6);
  Tensor x = rand_tensor({4}, rng);
  Tensor y = mul(x, x);
  sum(y).backward();
  Tensor z = sum(mul_scalar(y, 2.0));
  CHECK_THROWS_AS(z.backward(), AutogradError);
}

TEST_CASE("fresh graphs over shared leaves accumulate into leaf grads") {
  // The per-sample training pattern: one graph per sample, grads summed.
  Rng rng(7);
  Tensor w = rand_tensor({3}, rng);
  sum(mul(w, w)).backward();
  sum(mul(w, w)).backward();
  auto g = w.grad();
  for (int i = 0; i < 3; ++i)
    CHECK(g[i] == doctest::Approx(4.0 * w.data()[i]).epsilon(1e-12));
  w.zero_grad();
  CHECK(w.grad().empty());
}

TEST_CASE("every requires-grad leaf reachable from the loss gets a grad") {
  Rng rng(8);
  Tensor a = rand_tensor({2, 3}, rng);
  Tensor b = rand_tensor({3, 4}, rng);
  Tensor c = rand_tensor({4}, rng);
  Tensor loss = sum(linear(a, b, c));
  loss.backward();
  CHECK(!a.grad().empty());
  CHECK(!b.grad().empty());
  CHECK(!c.grad().empty());
}

TEST_CASE("graph traversal is topological and visits each node once") {
  Rng rng(9);
  Tensor x = rand_tensor({4}, rng);
  Tensor y = mul(x, x);           // diamond: y feeds two consumers
  Tensor z = add(y, mul_scalar(y, 3.0));
  Tensor loss = sum(z);
  Graph g = Graph::from_root(loss);
  const auto& topo = g.nodes();
  // Each node appears exactly once.
  for (size_t i = 0; i < topo.size(); ++i)
    for (size_t j = i + 1; j < topo.size(); ++j)
      CHECK(topo[i].get() != topo[j].get());
  // Parents come before children.
  for (size_t i = 0; i < topo.size(); ++i) {
    for (const auto& parent : topo[i]->parents) {
      bool seen = false;
      for (size_t j = 0; j < i; ++j)
        if (topo[j].get() == parent.get()) seen = true;
      if (parent->requires_grad) CHECK(seen);
    }
  }
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Rng rng(10);
  Tensor x = rand_tensor({3}, rng);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  CHECK(!y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("interior values may not be mutated") {
  Rng rng(11);
  Tensor x = rand_tensor({3}, rng);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(y.mutable_data(), AutogradError);
}

TEST_CASE("composites of library ops pass central finite differences") {
  Rng rng(12);
  // CA-style composite: conv -> channel pooling -> attention multiply.
  auto ca_like = [](const std::vector<Tensor>& t) {
    Tensor f = conv2d(t[0], t[1], t[2], 1, 1);
    Tensor pooled = concat_channels(channel_max(f), channel_avg(f));
    Tensor attn = sigmoid(conv2d(pooled, t[3], t[4], 1, 0));
    return broadcast_mul(f, attn);
  };
  for (int i = 0; i < 5; ++i) {
    std::vector<Tensor> in = {
        rand_tensor({2, 4, 4}, rng), rand_tensor({3, 2, 3, 3}, rng),
        rand_tensor({3}, rng), rand_tensor({1, 2, 1, 1}, rng),
        rand_tensor({1}, rng)};
    CHECK(gradcheck_all_elements(ca_like, in, rng) < 1e-4);
  }
  // Encoder-style composite: layer_norm -> linear -> gelu -> softmax mix.
  auto encoder_like = [](const std::vector<Tensor>& t) {
    Tensor h = layer_norm(t[0], t[1], t[2]);
    h = gelu(linear(h, t[3], t[4]));
    return softmax_lastdim(h);
  };
  for (int i = 0; i < 5; ++i) {
    std::vector<Tensor> in = {
        rand_tensor({3, 4}, rng), rand_tensor({4}, rng),
        rand_tensor({4}, rng), rand_tensor({4, 5}, rng),
        rand_tensor({5}, rng)};
    CHECK(gradcheck_all_elements(encoder_like, in, rng) < 1e-4);
  }
}

TEST_CASE("per-op finite-difference suite stays under tolerance") {
  // Smoke-level run (3 instances); the acceptance suite runs 20+.
  auto results = run_op_gradchecks(1234, 3);
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.worst_rel_err < 1e-4);
  }
}

TEST_CASE("the corrupted negative control is caught") {
  auto results = run_op_gradchecks(1234, 2, /*corrupt=*/true);
  bool saw_corrupt = false;
  for (const auto& r : results) {
    if (r.op == "corrupted_control") {
      saw_corrupt = true;
      CHECK(r.worst_rel_err > 1e-4);
    }
  }
  CHECK(saw_corrupt);
}
