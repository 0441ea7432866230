#include "mmnet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "mmnet/error.hpp"

namespace mmnet {

namespace {

constexpr int kResize = 236;
constexpr int kCrop = 224;

// Bilinear resample of one [3,H,W] plane set with edge clamping and the
// half-pixel center convention.
std::vector<double> resize_bilinear(const std::vector<double>& src, int h,
                                    int w, int out_h, int out_w) {
  std::vector<double> dst(static_cast<std::size_t>(3) * out_h * out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int c = 0; c < 3; ++c) {
    const double* plane = src.data() + static_cast<std::size_t>(c) * h * w;
    double* oplane = dst.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const double fy = (i + 0.5) * sy - 0.5;
      const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = std::clamp(fy - y0, 0.0, 1.0);
      for (int j = 0; j < out_w; ++j) {
        const double fx = (j + 0.5) * sx - 0.5;
        const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = std::clamp(fx - x0, 0.0, 1.0);
        const double top = plane[static_cast<std::size_t>(y0) * w + x0] *
                               (1.0 - wx) +
                           plane[static_cast<std::size_t>(y0) * w + x1] * wx;
        const double bot = plane[static_cast<std::size_t>(y1) * w + x0] *
                               (1.0 - wx) +
                           plane[static_cast<std::size_t>(y1) * w + x1] * wx;
        oplane[static_cast<std::size_t>(i) * out_w + j] =
            top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

Tensor process_frame(const Image& img, const AugmentParams& p) {
  if (img.height < kCrop || img.width < kCrop) {
    throw GeometryError("frame " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " is smaller than the " +
                        std::to_string(kCrop) + " crop");
  }
  // To doubles on the 1/256 grid.
  std::vector<double> planes(static_cast<std::size_t>(3) * img.height *
                             img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        planes[(static_cast<std::size_t>(c) * img.height + y) * img.width +
               x] = static_cast<double>(img.at(y, x, c)) / 256.0;

  std::vector<double> resized =
      resize_bilinear(planes, img.height, img.width, kResize, kResize);

  if (p.flip) {
    for (int c = 0; c < 3; ++c) {
      double* plane = resized.data() + static_cast<std::size_t>(c) * kResize *
                                           kResize;
      for (int y = 0; y < kResize; ++y) {
        double* row = plane + static_cast<std::size_t>(y) * kResize;
        std::reverse(row, row + kResize);
      }
    }
  }

  if (p.crop_x < 0 || p.crop_y < 0 || p.crop_x > kResize - kCrop ||
      p.crop_y > kResize - kCrop) {
    throw GeometryError("crop offset outside the resized frame");
  }
  std::vector<double> out(static_cast<std::size_t>(3) * kCrop * kCrop);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kCrop; ++y)
      for (int x = 0; x < kCrop; ++x)
        out[(static_cast<std::size_t>(c) * kCrop + y) * kCrop + x] =
            resized[(static_cast<std::size_t>(c) * kResize + p.crop_y + y) *
                        kResize +
                    p.crop_x + x];

  // Photometric jitter, clamped back into [0,1].
  if (p.brightness != 1.0 || p.contrast != 1.0) {
    for (double& v : out) {
      v = std::clamp((v * p.brightness - 0.5) * p.contrast + 0.5, 0.0, 1.0);
    }
  }
  return Tensor::from_vector({3, kCrop, kCrop}, std::move(out));
}

const std::string& frame_path(const SamplePair& pair, bool onset, int idx) {
  if (idx < 0) return onset ? pair.canonical_onset : pair.canonical_apex;
  const auto& cands = onset ? pair.onset_candidates : pair.apex_candidates;
  if (idx >= static_cast<int>(cands.size()))
    throw ProtocolError("candidate index out of range");
  return cands[idx];
}

}  // namespace

AugmentParams draw_augment_params(const SamplePair& pair, Rng& rng) {
  AugmentParams p;
  p.onset_candidate =
      static_cast<int>(rng.uniform_int(pair.onset_candidates.size()));
  p.apex_candidate =
      static_cast<int>(rng.uniform_int(pair.apex_candidates.size()));
  p.flip = rng.bernoulli(0.5);
  p.crop_x = static_cast<int>(rng.uniform_int(kResize - kCrop + 1));
  p.crop_y = static_cast<int>(rng.uniform_int(kResize - kCrop + 1));
  p.brightness = rng.uniform(0.8, 1.2);
  p.contrast = rng.uniform(0.8, 1.2);
  return p;
}

std::pair<Tensor, Tensor> apply_augment(const SamplePair& pair,
                                        const AugmentParams& params,
                                        ImageCache& images) {
  const Image& onset_img =
      images.get(frame_path(pair, true, params.onset_candidate));
  const Image& apex_img =
      images.get(frame_path(pair, false, params.apex_candidate));
  return {process_frame(onset_img, params), process_frame(apex_img, params)};
}

std::pair<Tensor, Tensor> augment(const SamplePair& pair, Rng& rng,
                                  bool training, ImageCache& images) {
  if (!training) return apply_augment(pair, AugmentParams{}, images);
  return apply_augment(pair, draw_augment_params(pair, rng), images);
}

}  // namespace mmnet
