#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmnet/ca_branch.hpp"
#include "mmnet/config.hpp"
#include "mmnet/params.hpp"
#include "mmnet/pc_branch.hpp"

namespace mmnet {

struct Prediction {
  Tensor logits;                      // [num_classes], part of the graph
  std::vector<double> probabilities;  // softmax of logits
  int predicted_class = 0;            // first argmax
};

// Intermediate values callers can request from a forward pass.
struct ForwardArtifacts {
  Tensor motion_features;         // [512,14,14]
  Tensor position_volume;         // [512,14,14]; undefined when use_pc=false
  std::vector<Tensor> attn_maps;  // empty when use_ca=false
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  long long count = 0;
};

// Two-branch classifier: frame difference through the attention blocks,
// downscaled onset through the position-calibration encoder, fused by
// addition, classified by global average pooling plus one linear layer.
class MMNet {
 public:
  MMNet(const RunConfig& config, Rng& rng);

  // Both frames [3,224,224], values in [0,1].
  Prediction forward(const Tensor& onset, const Tensor& apex,
                     ForwardArtifacts* artifacts = nullptr) const;
  // Forward with an explicit attention-mode override (ablation probes).
  Prediction forward(const Tensor& onset, const Tensor& apex, AttnMode mode,
                     ForwardArtifacts* artifacts = nullptr) const;

  Tensor loss(const Prediction& pred, int label) const;

  std::vector<ManifestEntry> parameter_manifest() const;

  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  bool use_ca() const { return use_ca_; }
  bool use_pc() const { return use_pc_; }
  AttnMode attn_mode() const { return attn_mode_; }
  int num_classes() const { return num_classes_; }

  const MainBranch& main_branch() const { return *main_; }

 private:
  bool use_ca_;
  bool use_pc_;
  AttnMode attn_mode_;
  int num_classes_;
  ParamRegistry params_;
  std::unique_ptr<MainBranch> main_;
  std::unique_ptr<PcModule> pc_;
  Tensor head_w_;  // [512, num_classes]
  Tensor head_b_;  // [num_classes]
};

// Softmax probabilities and first-argmax class of a logit vector.
Prediction make_prediction(Tensor logits);

}  // namespace mmnet
