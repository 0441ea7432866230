#include "mmnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "mmnet/ops.hpp"

namespace mmnet {

MMNet::MMNet(const RunConfig& config, Rng& rng)
    : use_ca_(config.use_ca),
      use_pc_(config.use_pc),
      attn_mode_(attn_mode_from_string(config.attn_mode)),
      num_classes_(config.num_classes) {
  config.validate();
  main_ = std::make_unique<MainBranch>(use_ca_, params_, rng);
  if (use_pc_) {
    pc_ = std::make_unique<PcModule>(config.n_layers, config.n_heads, params_,
                                     rng);
  }
  head_w_ = params_.add("head.weight",
                        init_linear_weight(512, num_classes_, rng));
  head_b_ = params_.add("head.bias", Tensor::zeros({num_classes_}, true));
}

Prediction make_prediction(Tensor logits) {
  Prediction pred;
  const int k = logits.numel();
  pred.probabilities.resize(k);
  auto data = logits.data();
  double mx = data[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, data[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    pred.probabilities[i] = std::exp(data[i] - mx);
    z += pred.probabilities[i];
  }
  for (int i = 0; i < k; ++i) pred.probabilities[i] /= z;
  pred.predicted_class = 0;
  for (int i = 1; i < k; ++i) {
    if (data[i] > data[pred.predicted_class]) pred.predicted_class = i;
  }
  pred.logits = std::move(logits);
  return pred;
}

Prediction MMNet::forward(const Tensor& onset, const Tensor& apex,
                          ForwardArtifacts* artifacts) const {
  return forward(onset, apex, attn_mode_, artifacts);
}

Prediction MMNet::forward(const Tensor& onset, const Tensor& apex,
                          AttnMode mode, ForwardArtifacts* artifacts) const {
  if (!same_shape(onset.shape(), apex.shape())) {
    throw DimensionError("onset " + shape_str(onset.shape()) + " and apex " +
                         shape_str(apex.shape()) + " frames must agree");
  }
  Tensor diff = sub(apex, onset);
  MainBranch::Output main_out = main_->forward(diff, mode);

  Tensor fused = main_out.features;
  Tensor position_volume;
  if (use_pc_) {
    Tensor onset_small = spatial_avgpool(onset, 16);  // 224 -> 14 box average
    position_volume = pc_->forward(onset_small);
    // add() rejects any shape mismatch between the two 512x14x14 volumes.
    fused = add(fused, position_volume);
  }

  Tensor pooled = global_avg_pool(fused);  // [512]
  Tensor logits = reshape(
      linear(reshape(pooled, {1, 512}), head_w_, head_b_), {num_classes_});

  if (artifacts) {
    artifacts->motion_features = main_out.features;
    artifacts->position_volume = position_volume;
    artifacts->attn_maps = main_out.attn_maps;
  }
  return make_prediction(std::move(logits));
}

Tensor MMNet::loss(const Prediction& pred, int label) const {
  return cross_entropy(pred.logits, label);
}

std::vector<ManifestEntry> MMNet::parameter_manifest() const {
  std::vector<ManifestEntry> manifest;
  manifest.reserve(params_.entries().size());
  for (const ParamEntry& e : params_.entries()) {
    manifest.push_back({e.name, e.tensor.shape(), e.tensor.numel()});
  }
  return manifest;
}

}  // namespace mmnet
