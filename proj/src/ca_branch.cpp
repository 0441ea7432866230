#include "mmnet/ca_branch.hpp"

#include "mmnet/ops.hpp"

namespace mmnet {

AttnMode attn_mode_from_string(const std::string& s) {
  if (s == "continuous") return AttnMode::kContinuous;
  if (s == "independent") return AttnMode::kIndependent;
  throw ConfigError("unknown attention mode '" + s +
                    "' (expected continuous or independent)");
}

std::string to_string(AttnMode mode) {
  return mode == AttnMode::kContinuous ? "continuous" : "independent";
}

CaModule::CaModule(ParamRegistry& params, const std::string& prefix,
                   Rng& rng) {
  conv_w_ = params.add(prefix + ".conv.weight", init_conv_weight(1, 2, 1, rng));
  conv_b_ = params.add(prefix + ".conv.bias", Tensor::zeros({1}, true));
}

Tensor CaModule::forward(const Tensor& f_conv, const Tensor& prev_attn,
                         AttnMode mode) const {
  Tensor pooled = concat_channels(channel_max(f_conv), channel_avg(f_conv));
  Tensor attn = sigmoid(conv2d(pooled, conv_w_, conv_b_, 1, 0));
  if (mode == AttnMode::kIndependent) {
    if (prev_attn.defined())
      throw ConfigError("independent attention takes no prior map");
    return attn;
  }
  if (!prev_attn.defined()) return attn;  // first block: no prior to apply
  if (prev_attn.ndim() != 3 || prev_attn.dim(0) != 1 ||
      prev_attn.dim(1) != 2 * f_conv.dim(1) ||
      prev_attn.dim(2) != 2 * f_conv.dim(2)) {
    throw GeometryError("prior attention map " + shape_str(prev_attn.shape()) +
                        " must be exactly twice the spatial size of " +
                        shape_str(f_conv.shape()));
  }
  return mul(attn, spatial_maxpool2(prev_attn));
}

CaBlock::CaBlock(int in_ch, int out_ch, bool with_attention,
                 ParamRegistry& params, const std::string& prefix, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch) {
  conv3_w_ =
      params.add(prefix + ".conv3.weight", init_conv_weight(out_ch, in_ch, 3, rng));
  conv3_b_ = params.add(prefix + ".conv3.bias", Tensor::zeros({out_ch}, true));
  conv1_w_ = params.add(prefix + ".conv1_main.weight",
                        init_conv_weight(out_ch, out_ch, 1, rng));
  conv1_b_ =
      params.add(prefix + ".conv1_main.bias", Tensor::zeros({out_ch}, true));
  skip_w_ = params.add(prefix + ".conv1_skip.weight",
                       init_conv_weight(out_ch, in_ch, 1, rng));
  skip_b_ =
      params.add(prefix + ".conv1_skip.bias", Tensor::zeros({out_ch}, true));
  norm_gamma_ =
      params.add(prefix + ".norm.gamma", Tensor::full({out_ch}, 1.0, true));
  norm_beta_ =
      params.add(prefix + ".norm.beta", Tensor::zeros({out_ch}, true));
  if (with_attention) ca_.emplace(params, prefix + ".attn", rng);
}

CaBlock::Output CaBlock::forward(const Tensor& x, const Tensor& prev_attn,
                                 AttnMode mode,
                                 const Tensor* attn_override) const {
  if (x.ndim() != 3 || x.dim(0) != in_ch_) {
    throw DimensionError("block expects [" + std::to_string(in_ch_) +
                         ",2H,2W] input, got " + shape_str(x.shape()));
  }
  Tensor main = conv2d(x, conv3_w_, conv3_b_, 2, 1);
  main = conv2d(main, conv1_w_, conv1_b_, 1, 0);
  Tensor skip = conv2d(x, skip_w_, skip_b_, 2, 0);
  Tensor f_conv =
      relu(channel_layer_norm(add(main, skip), norm_gamma_, norm_beta_));

  Output out;
  if (attn_override) {
    out.attn = *attn_override;
  } else if (ca_) {
    out.attn = ca_->forward(f_conv, prev_attn, mode);
  } else {
    out.features = f_conv;  // plain residual block (attention ablated away)
    return out;
  }
  out.features = broadcast_mul(f_conv, out.attn);
  return out;
}

MainBranch::MainBranch(bool use_attention, ParamRegistry& params, Rng& rng)
    : use_attention_(use_attention) {
  for (int i = 0; i + 1 < static_cast<int>(kChannelSchedule.size()); ++i) {
    blocks_.emplace_back(kChannelSchedule[i], kChannelSchedule[i + 1],
                         use_attention, params,
                         "main.block" + std::to_string(i + 1), rng);
  }
}

MainBranch::Output MainBranch::forward(const Tensor& diff,
                                       AttnMode mode) const {
  if (diff.ndim() != 3 || diff.dim(0) != 3 || diff.dim(1) != kInputSize ||
      diff.dim(2) != kInputSize) {
    throw DimensionError("main branch expects [3,224,224], got " +
                         shape_str(diff.shape()));
  }
  Output out;
  Tensor x = diff;
  Tensor prev;  // undefined for block 1: the prior defaults to all-ones
  for (const CaBlock& block : blocks_) {
    CaBlock::Output block_out = block.forward(x, prev, mode);
    x = block_out.features;
    if (use_attention_) {
      out.attn_maps.push_back(block_out.attn);
      prev = mode == AttnMode::kContinuous ? block_out.attn : Tensor();
    }
  }
  out.features = x;
  return out;
}

}  // namespace mmnet
