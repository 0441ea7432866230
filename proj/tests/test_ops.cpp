#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmnet/ops.hpp"
#include "mmnet/rng.hpp"
#include "oracles.hpp"

using namespace mmnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool rg = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(v), rg);
}

std::vector<double> to_vec(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
  Rng rng(7);
  Tensor x = rand_tensor({1, 3, 3}, rng);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d counts ones under a 3x3 ones kernel") {
  Tensor x = Tensor::full({1, 4, 4}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (double v : y.data()) CHECK(v == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv2d matches the direct quadruple-loop oracle") {
  Rng rng(11);
  struct Case {
    int cin, h, w, cout, k, stride, pad;
  };
  const Case cases[] = {
      {2, 5, 5, 3, 3, 2, 1}, {3, 8, 6, 4, 3, 1, 1}, {4, 7, 7, 2, 1, 1, 0},
      {3, 9, 9, 5, 1, 2, 0}, {1, 4, 4, 1, 3, 1, 0}, {2, 6, 8, 3, 3, 2, 0},
  };
  for (const Case& c : cases) {
    Tensor x = rand_tensor({c.cin, c.h, c.w}, rng);
    Tensor w = rand_tensor({c.cout, c.cin, c.k, c.k}, rng);
    Tensor b = rand_tensor({c.cout}, rng);
    Tensor y = conv2d(x, w, b, c.stride, c.pad);
    int ho = 0, wo = 0;
    auto ref = oracles::conv2d(to_vec(x), c.cin, c.h, c.w, to_vec(w), c.cout,
                               c.k, to_vec(b), c.stride, c.pad, ho, wo);
    REQUIRE(y.shape() == Shape{c.cout, ho, wo});
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(std::abs(y.data()[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("conv2d rejects bad geometry and shapes") {
  Rng rng(3);
  Tensor x = rand_tensor({2, 4, 4}, rng);
  CHECK_THROWS_AS(conv2d(x, rand_tensor({1, 3, 3, 3}, rng),
                         Tensor::zeros({1}), 1, 0),
                  DimensionError);  // channel mismatch
  CHECK_THROWS_AS(conv2d(rand_tensor({1, 2, 2}, rng),
                         rand_tensor({1, 1, 3, 3}, rng), Tensor::zeros({1}),
                         1, 0),
                  GeometryError);  // empty output
  CHECK_THROWS_AS(conv2d(x, rand_tensor({1, 2, 5, 5}, rng),
                         Tensor::zeros({1}), 1, 0),
                  GeometryError);  // unsupported kernel size
}

TEST_CASE("channel reductions: identity, two-element, and loop oracle") {
  Rng rng(21);
  SUBCASE("single channel is the identity for both ops") {
    Tensor x = rand_tensor({1, 3, 4}, rng);
    CHECK(to_vec(channel_max(x)) == to_vec(x));
    CHECK(to_vec(channel_avg(x)) == to_vec(x));
  }
  SUBCASE("two-element case") {
    Tensor x = Tensor::from_vector({2, 1, 1}, {3.0, -1.0});
    CHECK(channel_max(x).item() == 3.0);
    CHECK(channel_avg(x).item() == 1.0);
  }
  SUBCASE("random tensor matches the loop oracle exactly") {
    Tensor x = rand_tensor({8, 4, 4}, rng);
    auto mx = oracles::channel_max(to_vec(x), 8, 4, 4);
    auto av = oracles::channel_avg(to_vec(x), 8, 4, 4);
    Tensor ymx = channel_max(x);
    Tensor yav = channel_avg(x);
    for (int i = 0; i < 16; ++i) {
      CHECK(ymx.data()[i] == mx[i]);
      CHECK(yav.data()[i] == doctest::Approx(av[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("channel_max routes gradient to the first winning channel on ties") {
  Tensor x = Tensor::from_vector({3, 1, 1}, {2.0, 2.0, 1.0}, true);
  Tensor y = channel_max(x);
  sum(y).backward();
  auto g = x.grad();
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
}

TEST_CASE("spatial_maxpool2: constants, known window, oracle, errors") {
  Rng rng(5);
  SUBCASE("constant input stays constant") {
    Tensor x = Tensor::full({2, 4, 4}, 0.75);
    Tensor y = spatial_maxpool2(x);
    REQUIRE(y.shape() == Shape{2, 2, 2});
    for (double v : y.data()) CHECK(v == 0.75);
  }
  SUBCASE("single window takes its max") {
    Tensor x = Tensor::from_vector({1, 2, 2}, {1, 2, 3, 4});
    CHECK(spatial_maxpool2(x).item() == 4.0);
  }
  SUBCASE("random input matches the loop oracle") {
    Tensor x = rand_tensor({4, 8, 8}, rng);
    auto ref = oracles::maxpool2(to_vec(x), 4, 8, 8);
    Tensor y = spatial_maxpool2(x);
    for (size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == ref[i]);
  }
  SUBCASE("odd spatial size is rejected") {
    CHECK_THROWS_AS(spatial_maxpool2(rand_tensor({1, 3, 4}, rng)),
                    GeometryError);
  }
  SUBCASE("tie gradient goes to the first window element in row-major order") {
    Tensor x = Tensor::from_vector({1, 2, 2}, {5, 5, 5, 5}, true);
    spatial_maxpool2(x).backward();
    auto g = x.grad();
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
  }
}

TEST_CASE("sigmoid outputs stay inside (0,1)") {
  Rng rng(9);
  Tensor x = rand_tensor({10, 10}, rng, -30.0, 30.0);
  Tensor y = sigmoid(x);
  for (double v : y.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    Tensor x = rand_tensor({4, 7}, rng, -8.0, 8.0);
    Tensor y = softmax_lastdim(x);
    for (int r = 0; r < 4; ++r) {
      double acc = 0.0;
      for (int j = 0; j < 7; ++j) {
        const double v = y.at({r, j});
        CHECK(v > 0.0);
        acc += v;
      }
      CHECK(std::abs(acc - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("broadcast_mul scales every channel by the map") {
  Rng rng(17);
  Tensor x = rand_tensor({3, 2, 2}, rng);
  Tensor m = rand_tensor({1, 2, 2}, rng);
  Tensor y = broadcast_mul(x, m);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(y.at({c, i, j}) == x.at({c, i, j}) * m.at({0, i, j}));
  CHECK_THROWS_AS(broadcast_mul(x, rand_tensor({1, 4, 4}, rng)),
                  DimensionError);
}

TEST_CASE("patchify is inverted exactly by the token reshape") {
  Rng rng(23);
  Tensor x = rand_tensor({3, 14, 14}, rng);
  SUBCASE("constant image gives identical tokens") {
    Tensor c = Tensor::from_vector(
        {3, 14, 14}, [] {
          std::vector<double> v(3 * 196);
          for (int ch = 0; ch < 3; ++ch)
            for (int p = 0; p < 196; ++p) v[ch * 196 + p] = 0.1 * (ch + 1);
          return v;
        }());
    Tensor tok = patchify(c);
    for (int t = 0; t < 196; ++t)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(tok.at({t, ch}) == 0.1 * (ch + 1));
  }
  SUBCASE("single nonzero pixel lights up exactly its token") {
    std::vector<double> v(3 * 196, 0.0);
    v[0 * 196 + 1] = 5.0;  // channel 0, row 0, col 1 -> token 1
    Tensor img = Tensor::from_vector({3, 14, 14}, std::move(v));
    Tensor tok = patchify(img);
    for (int t = 0; t < 196; ++t)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(tok.at({t, ch}) == ((t == 1 && ch == 0) ? 5.0 : 0.0));
  }
  SUBCASE("roundtrip restores the image bit-exactly") {
    Tensor tok = patchify(x);
    Tensor back = tokens_to_chw(tok, 14, 14);
    REQUIRE(back.shape() == x.shape());
    for (int i = 0; i < x.numel(); ++i)
      CHECK(back.data()[i] == x.data()[i]);
  }
  CHECK_THROWS_AS(patchify(rand_tensor({3, 7, 7}, rng)), DimensionError);
}

TEST_CASE("cross_entropy handles uniform and dominant logits") {
  SUBCASE("uniform logits give ln K") {
    for (int k : {2, 5, 7}) {
      Tensor logits = Tensor::full({k}, 0.3);
      CHECK(cross_entropy(logits, 0).item() ==
            doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
  }
  SUBCASE("a +30 margin drives the loss below 1e-9") {
    Tensor logits = Tensor::from_vector({4}, {30.0, 0.0, 0.0, 0.0});
    CHECK(cross_entropy(logits, 0).item() < 1e-9);
  }
  SUBCASE("out-of-range labels are rejected") {
    Tensor logits = Tensor::zeros({3});
    CHECK_THROWS_AS(cross_entropy(logits, 3), LabelError);
    CHECK_THROWS_AS(cross_entropy(logits, -1), LabelError);
  }
}

TEST_CASE("ops are bit-deterministic for identical inputs") {
  auto run = [] {
    Rng rng(99);
    Tensor x = rand_tensor({4, 8, 8}, rng);
    Tensor w = rand_tensor({6, 4, 3, 3}, rng);
    Tensor b = rand_tensor({6}, rng);
    Tensor y = conv2d(x, w, b, 2, 1);
    y = relu(y);
    y = spatial_maxpool2(y);
    return to_vec(sum(y));
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite results are reported as numeric errors") {
  Tensor x = Tensor::full({2, 2}, 1e308);
  CHECK_THROWS_AS(mul(x, x), NumericError);
}
