#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mmnet/params.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

enum class AttnMode { kContinuous, kIndependent };

AttnMode attn_mode_from_string(const std::string& s);
std::string to_string(AttnMode mode);

// Spatial attention head of one block: a 1x1 convolution over the
// [max-pool ; avg-pool] channel summary squashed by a sigmoid, optionally
// multiplied by the max-pooled attention map of the previous block.
class CaModule {
 public:
  CaModule(ParamRegistry& params, const std::string& prefix, Rng& rng);

  // f_conv: [2C,H,W]. prev_attn must be defined exactly when mode is
  // continuous and this is not the first block; it carries [1,2H,2W].
  Tensor forward(const Tensor& f_conv, const Tensor& prev_attn,
                 AttnMode mode) const;

 private:
  Tensor conv_w_;  // [1,2,1,1]
  Tensor conv_b_;  // [1]
};

// One downsampling block: 3x3 stride-2 channel-expanding conv followed by a
// 1x1 conv, plus a strided 1x1 skip, normalized across channels and gated by
// the attention map (when attention is enabled).
class CaBlock {
 public:
  CaBlock(int in_ch, int out_ch, bool with_attention, ParamRegistry& params,
          const std::string& prefix, Rng& rng);

  struct Output {
    Tensor features;  // [out_ch, H, W]
    Tensor attn;      // [1, H, W]; undefined when attention is disabled
  };

  // attn_override, when given, replaces the computed attention map (test
  // hook for forcing a known gate).
  Output forward(const Tensor& x, const Tensor& prev_attn, AttnMode mode,
                 const Tensor* attn_override = nullptr) const;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  int in_ch_;
  int out_ch_;
  Tensor conv3_w_, conv3_b_;  // 3x3 stride 2, pad 1, expands channels
  Tensor conv1_w_, conv1_b_;  // 1x1 on the main path
  Tensor skip_w_, skip_b_;    // 1x1 stride 2 on the residual path
  Tensor norm_gamma_, norm_beta_;
  std::optional<CaModule> ca_;
};

// The motion branch: four blocks taking the 3x224x224 frame difference down
// to 512x14x14, threading attention maps between blocks in continuous mode.
class MainBranch {
 public:
  static constexpr std::array<int, 5> kChannelSchedule = {3, 64, 128, 256,
                                                          512};
  static constexpr int kInputSize = 224;

  MainBranch(bool use_attention, ParamRegistry& params, Rng& rng);

  struct Output {
    Tensor features;                // [512,14,14]
    std::vector<Tensor> attn_maps;  // per block: 1x112^2 ... 1x14^2 (empty
                                    // when attention is disabled)
  };

  Output forward(const Tensor& diff, AttnMode mode) const;

  const std::vector<CaBlock>& blocks() const { return blocks_; }
  bool use_attention() const { return use_attention_; }

 private:
  bool use_attention_;
  std::vector<CaBlock> blocks_;
};

}  // namespace mmnet
