#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmnet/ca_branch.hpp"
#include "mmnet/ops.hpp"

using namespace mmnet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool rg = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(v), rg);
}

void zero_param(ParamRegistry& params, const std::string& name) {
  const Tensor* t = params.find(name);
  REQUIRE(t != nullptr);
  Tensor copy = *t;
  for (double& v : copy.mutable_data()) v = 0.0;
}

}  // namespace

TEST_CASE("attention module: zero conv gives a uniform 0.5 map") {
  ParamRegistry params;
  Rng rng(1);
  CaModule ca(params, "attn", rng);
  zero_param(params, "attn.conv.weight");
  zero_param(params, "attn.conv.bias");
  Rng data_rng(2);
  Tensor f_conv = rand_tensor({4, 6, 6}, data_rng);
  Tensor attn = ca.forward(f_conv, Tensor(), AttnMode::kContinuous);
  REQUIRE(attn.shape() == Shape{1, 6, 6});
  for (double v : attn.data()) CHECK(v == 0.5);
}

TEST_CASE("attention module: an all-ones prior is the multiplicative identity") {
  ParamRegistry params;
  Rng rng(3);
  CaModule ca(params, "attn", rng);
  Rng data_rng(4);
  Tensor f_conv = rand_tensor({4, 6, 6}, data_rng);
  Tensor ones_prior = Tensor::full({1, 12, 12}, 1.0);
  Tensor with_prior = ca.forward(f_conv, ones_prior, AttnMode::kContinuous);
  Tensor without = ca.forward(f_conv, Tensor(), AttnMode::kContinuous);
  for (int i = 0; i < with_prior.numel(); ++i)
    CHECK(with_prior.data()[i] == without.data()[i]);
}

TEST_CASE("attention module matches a hand-composed primitive pipeline") {
  ParamRegistry params;
  Rng rng(5);
  CaModule ca(params, "attn", rng);
  Rng data_rng(6);
  Tensor f_conv = rand_tensor({4, 4, 4}, data_rng);
  Tensor prev = rand_tensor({1, 8, 8}, data_rng, 0.05, 1.0);
  Tensor got = ca.forward(f_conv, prev, AttnMode::kContinuous);

  const Tensor* w = params.find("attn.conv.weight");
  const Tensor* b = params.find("attn.conv.bias");
  Tensor expected = mul(
      sigmoid(conv2d(concat_channels(channel_max(f_conv), channel_avg(f_conv)),
                     *w, *b, 1, 0)),
      spatial_maxpool2(prev));
  REQUIRE(got.shape() == expected.shape());
  for (int i = 0; i < got.numel(); ++i)
    CHECK(std::abs(got.data()[i] - expected.data()[i]) < 1e-12);
}

TEST_CASE("attention module rejects mismatched priors and misuse") {
  ParamRegistry params;
  Rng rng(7);
  CaModule ca(params, "attn", rng);
  Rng data_rng(8);
  Tensor f_conv = rand_tensor({4, 6, 6}, data_rng);
  CHECK_THROWS_AS(
      ca.forward(f_conv, rand_tensor({1, 6, 6}, data_rng), AttnMode::kContinuous),
      GeometryError);
  CHECK_THROWS_AS(ca.forward(f_conv, rand_tensor({1, 12, 12}, data_rng),
                             AttnMode::kIndependent),
                  ConfigError);
}

TEST_CASE("block: forcing an all-ones attention map returns F_conv untouched") {
  ParamRegistry params;
  Rng rng(9);
  CaBlock block(3, 8, true, params, "main.block1", rng);
  Rng data_rng(10);
  Tensor x = rand_tensor({3, 8, 8}, data_rng);
  Tensor ones = Tensor::full({1, 4, 4}, 1.0);
  CaBlock::Output forced = block.forward(x, Tensor(), AttnMode::kContinuous,
                                         &ones);
  // Same block without attention gives raw F_conv.
  ParamRegistry params2;
  Rng rng2(9);
  CaBlock plain(3, 8, false, params2, "main.block1", rng2);
  CaBlock::Output raw = plain.forward(x, Tensor(), AttnMode::kContinuous);
  REQUIRE(forced.features.shape() == raw.features.shape());
  for (int i = 0; i < raw.features.numel(); ++i)
    CHECK(forced.features.data()[i] == raw.features.data()[i]);
}

TEST_CASE("block: zero input with zero biases yields zero features") {
  ParamRegistry params;
  Rng rng(11);
  CaBlock block(3, 8, true, params, "main.block1", rng);
  // Biases, norm shift are zero-initialized already; features must be zero
  // regardless of the attention values.
  Tensor x = Tensor::zeros({3, 8, 8});
  CaBlock::Output out = block.forward(x, Tensor(), AttnMode::kContinuous);
  for (double v : out.features.data()) CHECK(v == 0.0);
}

TEST_CASE("block 2 of the schedule maps 64x112x112 to 128x56x56") {
  ParamRegistry params;
  Rng rng(12);
  CaBlock block(64, 128, true, params, "main.block2", rng);
  Rng data_rng(13);
  Tensor x = rand_tensor({64, 112, 112}, data_rng);
  CaBlock::Output out = block.forward(x, Tensor(), AttnMode::kIndependent);
  CHECK(out.features.shape() == Shape{128, 56, 56});
  CHECK(out.attn.shape() == Shape{1, 56, 56});
  CHECK_THROWS_AS(block.forward(rand_tensor({3, 112, 112}, data_rng), Tensor(),
                                AttnMode::kIndependent),
                  DimensionError);
}

TEST_CASE("main branch: schedule, zero-diff zeros, and mode agreement") {
  ParamRegistry params;
  Rng rng(14);
  MainBranch branch(true, params, rng);
  Rng data_rng(15);

  SUBCASE("random input walks the full 64/128/256/512 schedule") {
    Tensor diff = rand_tensor({3, 224, 224}, data_rng, -1.0, 1.0);
    MainBranch::Output out = branch.forward(diff, AttnMode::kContinuous);
    CHECK(out.features.shape() == Shape{512, 14, 14});
    REQUIRE(out.attn_maps.size() == 4);
    CHECK(out.attn_maps[0].shape() == Shape{1, 112, 112});
    CHECK(out.attn_maps[1].shape() == Shape{1, 56, 56});
    CHECK(out.attn_maps[2].shape() == Shape{1, 28, 28});
    CHECK(out.attn_maps[3].shape() == Shape{1, 14, 14});
  }

  SUBCASE("identical frames give an exactly zero feature volume") {
    Tensor diff = Tensor::zeros({3, 224, 224});
    MainBranch::Output out = branch.forward(diff, AttnMode::kContinuous);
    for (double v : out.features.data()) CHECK(v == 0.0);
  }

  SUBCASE("continuous and independent modes agree on block 1") {
    Tensor diff = rand_tensor({3, 224, 224}, data_rng, -0.5, 0.5);
    MainBranch::Output cont = branch.forward(diff, AttnMode::kContinuous);
    MainBranch::Output ind = branch.forward(diff, AttnMode::kIndependent);
    for (int i = 0; i < cont.attn_maps[0].numel(); ++i)
      CHECK(cont.attn_maps[0].data()[i] == ind.attn_maps[0].data()[i]);
  }

  SUBCASE("wrong input shape is rejected") {
    CHECK_THROWS_AS(
        branch.forward(rand_tensor({3, 112, 112}, data_rng), AttnMode::kContinuous),
        DimensionError);
  }
}

TEST_CASE("continuous chaining can only shrink the sigmoid term") {
  ParamRegistry params;
  Rng rng(16);
  MainBranch branch(true, params, rng);
  Rng data_rng(17);
  Tensor diff = rand_tensor({3, 224, 224}, data_rng, -0.8, 0.8);
  MainBranch::Output cont = branch.forward(diff, AttnMode::kContinuous);
  MainBranch::Output ind = branch.forward(diff, AttnMode::kIndependent);
  // Independent maps are exactly the per-block sigmoid terms, so the chained
  // map can never exceed them; attention values stay in (0,1].
  for (int b = 1; b < 4; ++b) {
    for (int i = 0; i < cont.attn_maps[b].numel(); ++i) {
      const double chained = cont.attn_maps[b].data()[i];
      const double sigma = ind.attn_maps[b].data()[i];
      CHECK(chained <= sigma + 1e-15);
      CHECK(chained > 0.0);
      CHECK(chained <= 1.0);
    }
  }
}

TEST_CASE("identity shift of both frames leaves the diff pathway bit-identical") {
  ParamRegistry params;
  Rng rng(18);
  MainBranch branch(true, params, rng);
  Rng data_rng(19);
  // Frames quantized to the 1/256 grid exactly as image loading produces.
  auto quantized = [&](double) {
    std::vector<double> v(3 * 224 * 224);
    for (double& x : v)
      x = static_cast<double>(data_rng.uniform_int(256)) / 256.0;
    return v;
  };
  std::vector<double> onset_v = quantized(0);
  std::vector<double> apex_v = quantized(0);
  for (int trial = 0; trial < 3; ++trial) {
    const double c = static_cast<double>(data_rng.uniform_int(256)) / 256.0;
    std::vector<double> onset_c = onset_v, apex_c = apex_v;
    for (double& x : onset_c) x += c;
    for (double& x : apex_c) x += c;
    Tensor d0 = sub(Tensor::from_vector({3, 224, 224}, apex_v),
                    Tensor::from_vector({3, 224, 224}, onset_v));
    Tensor d1 = sub(Tensor::from_vector({3, 224, 224}, apex_c),
                    Tensor::from_vector({3, 224, 224}, onset_c));
    MainBranch::Output base = branch.forward(d0, AttnMode::kContinuous);
    MainBranch::Output shifted = branch.forward(d1, AttnMode::kContinuous);
    for (int i = 0; i < base.features.numel(); ++i)
      CHECK(base.features.data()[i] == shifted.features.data()[i]);
  }
}

TEST_CASE("gradient reaches every main-branch parameter") {
  ParamRegistry params;
  Rng rng(20);
  MainBranch branch(true, params, rng);
  Rng data_rng(21);
  Tensor diff = rand_tensor({3, 224, 224}, data_rng, -0.5, 0.5);
  MainBranch::Output out = branch.forward(diff, AttnMode::kContinuous);
  sum(out.features).backward();
  for (const ParamEntry& e : params.entries()) {
    auto g = e.tensor.grad();
    INFO(e.name);
    REQUIRE(!g.empty());
    bool any_nonzero = false;
    for (double v : g)
      if (v != 0.0) any_nonzero = true;
    CHECK(any_nonzero);
  }
}
