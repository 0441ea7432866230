#include "mmnet/pc_branch.hpp"

#include <cmath>

#include "mmnet/ops.hpp"

namespace mmnet {

Tensor multi_head_self_attention(const Tensor& tokens, const Tensor& wq,
                                 const Tensor& bq, const Tensor& wk,
                                 const Tensor& bk, const Tensor& wv,
                                 const Tensor& bv, const Tensor& wo,
                                 const Tensor& bo, int heads,
                                 std::vector<Tensor>* attn_out) {
  if (tokens.ndim() != 2)
    throw DimensionError("self-attention expects [T,D] tokens");
  const int width = tokens.dim(1);
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("token width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const int dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = linear(tokens, wq, bq);
  Tensor k = linear(tokens, wk, bk);
  Tensor v = linear(tokens, wv, bv);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor attn =
        softmax_lastdim(mul_scalar(matmul(qh, transpose2d(kh)), scale));
    if (attn_out) attn_out->push_back(attn);
    head_outputs.push_back(matmul(attn, vh));
  }
  return linear(concat_cols(head_outputs), wo, bo);
}

PatchEmbedder::PatchEmbedder(ParamRegistry& params, const std::string& prefix,
                             Rng& rng) {
  proj_w_ =
      params.add(prefix + ".proj.weight", init_linear_weight(3, kWidth, rng));
  proj_b_ = params.add(prefix + ".proj.bias", Tensor::zeros({kWidth}, true));
  pos_ = params.add(prefix + ".pos_embed",
                    init_embedding(kTokens, kWidth, rng));
}

Tensor PatchEmbedder::forward(const Tensor& onset_small) const {
  Tensor tokens = patchify(onset_small);  // validates [3,14,14]
  return add(linear(tokens, proj_w_, proj_b_), pos_);
}

EncoderLayer::EncoderLayer(int width, int heads, ParamRegistry& params,
                           const std::string& prefix, Rng& rng)
    : heads_(heads) {
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("encoder width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const int hidden = 4 * width;
  ln1_g_ = params.add(prefix + ".ln1.gamma", Tensor::full({width}, 1.0, true));
  ln1_b_ = params.add(prefix + ".ln1.beta", Tensor::zeros({width}, true));
  wq_ = params.add(prefix + ".msa.wq.weight",
                   init_linear_weight(width, width, rng));
  bq_ = params.add(prefix + ".msa.wq.bias", Tensor::zeros({width}, true));
  wk_ = params.add(prefix + ".msa.wk.weight",
                   init_linear_weight(width, width, rng));
  bk_ = params.add(prefix + ".msa.wk.bias", Tensor::zeros({width}, true));
  wv_ = params.add(prefix + ".msa.wv.weight",
                   init_linear_weight(width, width, rng));
  bv_ = params.add(prefix + ".msa.wv.bias", Tensor::zeros({width}, true));
  wo_ = params.add(prefix + ".msa.wo.weight",
                   init_linear_weight(width, width, rng));
  bo_ = params.add(prefix + ".msa.wo.bias", Tensor::zeros({width}, true));
  ln2_g_ = params.add(prefix + ".ln2.gamma", Tensor::full({width}, 1.0, true));
  ln2_b_ = params.add(prefix + ".ln2.beta", Tensor::zeros({width}, true));
  fc1_w_ = params.add(prefix + ".mlp.fc1.weight",
                      init_linear_weight(width, hidden, rng));
  fc1_b_ = params.add(prefix + ".mlp.fc1.bias", Tensor::zeros({hidden}, true));
  fc2_w_ = params.add(prefix + ".mlp.fc2.weight",
                      init_linear_weight(hidden, width, rng));
  fc2_b_ = params.add(prefix + ".mlp.fc2.bias", Tensor::zeros({width}, true));
}

Tensor EncoderLayer::forward(const Tensor& tokens,
                             std::vector<Tensor>* attn_out) const {
  Tensor h = add(tokens, multi_head_self_attention(
                             layer_norm(tokens, ln1_g_, ln1_b_), wq_, bq_, wk_,
                             bk_, wv_, bv_, wo_, bo_, heads_, attn_out));
  Tensor mlp = linear(gelu(linear(layer_norm(h, ln2_g_, ln2_b_), fc1_w_,
                                  fc1_b_)),
                      fc2_w_, fc2_b_);
  return add(h, mlp);
}

PcModule::PcModule(int n_layers, int n_heads, ParamRegistry& params, Rng& rng)
    : embedder_(params, "pc.patch", rng) {
  if (n_layers < 1) throw ConfigError("encoder needs at least one layer");
  for (int i = 0; i < n_layers; ++i) {
    layers_.emplace_back(PatchEmbedder::kWidth, n_heads, params,
                         "pc.layer" + std::to_string(i), rng);
  }
}

Tensor PcModule::forward(const Tensor& onset_small,
                         std::vector<std::vector<Tensor>>* attn_out) const {
  Tensor tokens = embedder_.forward(onset_small);
  for (const EncoderLayer& layer : layers_) {
    std::vector<Tensor> layer_attn;
    tokens = layer.forward(tokens, attn_out ? &layer_attn : nullptr);
    if (attn_out) attn_out->push_back(std::move(layer_attn));
  }
  return tokens_to_chw(tokens, 14, 14);
}

}  // namespace mmnet
