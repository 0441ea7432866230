#pragma once

#include <utility>

#include "mmnet/dataset.hpp"
#include "mmnet/rng.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

// Fully-determined augmentation decisions for one sample. The candidate
// picks differ between onset and apex; every geometric and photometric
// parameter is shared so the frame difference never encodes the transform.
struct AugmentParams {
  int onset_candidate = -1;  // -1 = canonical frame
  int apex_candidate = -1;
  bool flip = false;
  int crop_x = 6;  // offsets into the 236x236 resize; 6,6 = center crop
  int crop_y = 6;
  double brightness = 1.0;
  double contrast = 1.0;
};

// Training-time draw. Consumption order (documented for replay): onset
// candidate, apex candidate, flip, crop_x, crop_y, brightness, contrast.
AugmentParams draw_augment_params(const SamplePair& pair, Rng& rng);

// Deterministic pipeline: candidate pick -> bilinear resize to 236 -> flip
// -> 224 crop -> brightness/contrast jitter, identical transforms for both
// frames. Source images must be at least 224x224.
std::pair<Tensor, Tensor> apply_augment(const SamplePair& pair,
                                        const AugmentParams& params,
                                        ImageCache& images);

// training=true draws params from rng; training=false uses the canonical
// frames with a center crop and identity jitter (and consumes no rng state).
std::pair<Tensor, Tensor> augment(const SamplePair& pair, Rng& rng,
                                  bool training, ImageCache& images);

}  // namespace mmnet
