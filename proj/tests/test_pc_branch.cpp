#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mmnet/ops.hpp"
#include "mmnet/pc_branch.hpp"
#include "oracles.hpp"

using namespace mmnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool rg = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(v), rg);
}

Tensor identity_matrix(int n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  return Tensor::from_vector({n, n}, std::move(v));
}

}  // namespace

TEST_CASE("attention rows sum to one for every head") {
  Rng rng(1);
  Tensor tokens = rand_tensor({6, 8}, rng);
  std::vector<Tensor> attn;
  multi_head_self_attention(tokens, rand_tensor({8, 8}, rng),
                            rand_tensor({8}, rng), rand_tensor({8, 8}, rng),
                            rand_tensor({8}, rng), rand_tensor({8, 8}, rng),
                            rand_tensor({8}, rng), rand_tensor({8, 8}, rng),
                            rand_tensor({8}, rng), 2, &attn);
  REQUIRE(attn.size() == 2);
  for (const Tensor& a : attn) {
    REQUIRE(a.shape() == Shape{6, 6});
    for (int i = 0; i < 6; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 6; ++j) acc += a.at({i, j});
      CHECK(std::abs(acc - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("duplicated tokens with identity V/O projections collapse to one row") {
  Rng rng(2);
  const int d = 8, t = 16;
  std::vector<double> row(d);
  for (double& v : row) v = rng.uniform(-1, 1);
  std::vector<double> all;
  for (int i = 0; i < t; ++i) all.insert(all.end(), row.begin(), row.end());
  Tensor tokens = Tensor::from_vector({t, d}, std::move(all));
  Tensor eye = identity_matrix(d);
  Tensor zero_b = Tensor::zeros({d});
  Tensor out = multi_head_self_attention(
      tokens, rand_tensor({d, d}, rng), rand_tensor({d}, rng),
      rand_tensor({d, d}, rng), rand_tensor({d}, rng), eye, zero_b, eye,
      zero_b, 2);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(out.at({i, j}) == doctest::Approx(row[j]).epsilon(1e-12));
}

TEST_CASE("single-head attention matches the dense oracle") {
  Rng rng(3);
  const int t = 4, d = 8;
  Tensor tokens = rand_tensor({t, d}, rng);
  Tensor eye = identity_matrix(d);
  Tensor zero_b = Tensor::zeros({d});
  // Q = K = V = tokens, output projection identity: the oracle's setting.
  Tensor out = multi_head_self_attention(tokens, eye, zero_b, eye, zero_b,
                                         eye, zero_b, eye, zero_b, 1);
  std::vector<double> tok(tokens.data().begin(), tokens.data().end());
  auto ref = oracles::dense_attention(tok, tok, tok, t, d);
  for (int i = 0; i < t * d; ++i)
    CHECK(std::abs(out.data()[i] - ref[i]) < 1e-10);
}

TEST_CASE("head width must divide the token width") {
  Rng rng(4);
  Tensor tokens = rand_tensor({4, 8}, rng);
  Tensor eye = identity_matrix(8);
  Tensor zero_b = Tensor::zeros({8});
  CHECK_THROWS_AS(multi_head_self_attention(tokens, eye, zero_b, eye, zero_b,
                                            eye, zero_b, eye, zero_b, 3),
                  ConfigError);
}

TEST_CASE("pc module: output volume is 512x14x14 under every table setting") {
  Rng data_rng(5);
  Tensor onset_small = rand_tensor({3, 14, 14}, data_rng, 0.0, 1.0);
  for (int layers : {2, 3}) {
    for (int heads : {2, 4, 8}) {
      ParamRegistry params;
      Rng rng(6);
      PcModule pc(layers, heads, params, rng);
      Tensor out = pc.forward(onset_small);
      CHECK(out.shape() == Shape{512, 14, 14});
    }
  }
  ParamRegistry params;
  Rng rng(7);
  CHECK_THROWS_AS(PcModule(2, 5, params, rng), ConfigError);
}

TEST_CASE("pc module: zero input stays finite and exactly zero by structure") {
  // Zero thumbnail + zero pos table + zero biases:层-norm epsilon keeps
  // every intermediate finite, and the output collapses to exact zeros.
  ParamRegistry params;
  Rng rng(8);
  PcModule pc(2, 4, params, rng);
  {
    Tensor pos = *params.find("pc.patch.pos_embed");
    for (double& v : pos.mutable_data()) v = 0.0;
  }
  Tensor out = pc.forward(Tensor::zeros({3, 14, 14}));
  for (double v : out.data()) {
    CHECK(std::isfinite(v));
    CHECK(v == 0.0);
  }
}

TEST_CASE("pc module: attention rows sum to one at every layer") {
  ParamRegistry params;
  Rng rng(9);
  PcModule pc(2, 4, params, rng);
  Rng data_rng(10);
  Tensor onset_small = rand_tensor({3, 14, 14}, data_rng, 0.0, 1.0);
  std::vector<std::vector<Tensor>> attn;
  pc.forward(onset_small, &attn);
  REQUIRE(attn.size() == 2);
  for (const auto& layer : attn) {
    REQUIRE(layer.size() == 4);
    for (const Tensor& a : layer) {
      for (int i = 0; i < 196; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 196; ++j) acc += a.at({i, j});
        CHECK(std::abs(acc - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("position information enters only through the positional table") {
  // Permuting input pixels together with pos_embed rows permutes the output
  // spatially and changes nothing else.
  ParamRegistry params;
  Rng rng(11);
  PcModule pc(2, 2, params, rng);
  Rng data_rng(12);
  Tensor onset_small = rand_tensor({3, 14, 14}, data_rng, 0.0, 1.0);
  Tensor base = pc.forward(onset_small);

  std::vector<int> perm(196);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 195; i > 0; --i) {
    const int j = static_cast<int>(data_rng.uniform_int(i + 1));
    std::swap(perm[i], perm[j]);
  }

  // Permute the image pixels: token perm[t] holds what token t held.
  std::vector<double> permuted(3 * 196);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 196; ++t)
      permuted[c * 196 + perm[t]] = onset_small.at({c, t / 14, t % 14});
  Tensor permuted_img = Tensor::from_vector({3, 14, 14}, std::move(permuted));

  // Permute pos_embed rows the same way (restored afterwards).
  Tensor pos = *params.find("pc.patch.pos_embed");
  std::vector<double> orig(pos.data().begin(), pos.data().end());
  {
    auto rows = pos.mutable_data();
    for (int t = 0; t < 196; ++t)
      for (int d = 0; d < 512; ++d)
        rows[static_cast<std::size_t>(perm[t]) * 512 + d] =
            orig[static_cast<std::size_t>(t) * 512 + d];
  }
  Tensor permuted_out = pc.forward(permuted_img);
  {
    auto rows = pos.mutable_data();
    std::copy(orig.begin(), orig.end(), rows.begin());
  }

  for (int d = 0; d < 512; ++d)
    for (int t = 0; t < 196; ++t)
      CHECK(permuted_out.at({d, perm[t] / 14, perm[t] % 14}) ==
            doctest::Approx(base.at({d, t / 14, t % 14})).epsilon(1e-12));
}

TEST_CASE("gradient reaches the positional table and every projection") {
  ParamRegistry params;
  Rng rng(13);
  PcModule pc(2, 4, params, rng);
  Rng data_rng(14);
  Tensor onset_small = rand_tensor({3, 14, 14}, data_rng, 0.0, 1.0);
  sum(pc.forward(onset_small)).backward();
  for (const ParamEntry& e : params.entries()) {
    INFO(e.name);
    auto g = e.tensor.grad();
    REQUIRE(!g.empty());
    bool any = false;
    for (double v : g)
      if (v != 0.0) any = true;
    CHECK(any);
  }
}
