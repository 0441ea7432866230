#pragma once

#include <string>
#include <vector>

#include "mmnet/params.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

// Scaled dot-product attention with `heads` subspaces over [T,D] tokens.
// Weights are [D,D] with bias [D]; per-head width is D/heads. When attn_out
// is given it receives one [T,T] attention matrix per head.
Tensor multi_head_self_attention(const Tensor& tokens, const Tensor& wq,
                                 const Tensor& bq, const Tensor& wk,
                                 const Tensor& bk, const Tensor& wv,
                                 const Tensor& bv, const Tensor& wo,
                                 const Tensor& bo, int heads,
                                 std::vector<Tensor>* attn_out = nullptr);

// Per-pixel patch embedding of the 14x14 onset thumbnail: 196 tokens of
// width 3 projected to 512 plus a learned positional table.
class PatchEmbedder {
 public:
  static constexpr int kTokens = 196;
  static constexpr int kWidth = 512;

  PatchEmbedder(ParamRegistry& params, const std::string& prefix, Rng& rng);
  Tensor forward(const Tensor& onset_small) const;  // [3,14,14] -> [196,512]
  const Tensor& pos_embed() const { return pos_; }

 private:
  Tensor proj_w_;  // [3,512]
  Tensor proj_b_;  // [512]
  Tensor pos_;     // [196,512]
};

// Pre-norm encoder layer: x + MSA(LN(x)), then x + MLP(LN(x)) with a 4x
// hidden expansion and gelu.
class EncoderLayer {
 public:
  EncoderLayer(int width, int heads, ParamRegistry& params,
               const std::string& prefix, Rng& rng);
  Tensor forward(const Tensor& tokens,
                 std::vector<Tensor>* attn_out = nullptr) const;
  int heads() const { return heads_; }

 private:
  int heads_;
  Tensor ln1_g_, ln1_b_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  Tensor ln2_g_, ln2_b_;
  Tensor fc1_w_, fc1_b_;  // [512,2048]
  Tensor fc2_w_, fc2_b_;  // [2048,512]
};

// Position-calibration subbranch: downscaled onset frame -> patch embedding
// -> n_layers encoder layers -> 512x14x14 position-embedding volume. No
// class token; all 196 tokens stay spatial.
class PcModule {
 public:
  PcModule(int n_layers, int n_heads, ParamRegistry& params, Rng& rng);

  // onset_small: [3,14,14]. attn_out, when given, receives per-layer lists
  // of per-head attention matrices.
  Tensor forward(const Tensor& onset_small,
                 std::vector<std::vector<Tensor>>* attn_out = nullptr) const;

  int n_layers() const { return static_cast<int>(layers_.size()); }

 private:
  PatchEmbedder embedder_;
  std::vector<EncoderLayer> layers_;
};

}  // namespace mmnet
