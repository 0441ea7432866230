#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmnet/dataset.hpp"

namespace mmnet {

// Half-open pixel box [x0,x1) x [y0,y1) in source-image coordinates.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

struct SynthSpec {
  int subjects = 0;
  int classes = 0;     // up to 5
  int samples_per = 0; // samples per (subject, class)
  int image_size = 224;
};

// Renders a procedural face dataset into out_dir (PPM frames plus the index)
// and returns it loaded. Subjects vary head geometry, skin tone, and fixed
// identity marks; the expression classes displace a localized region only
// (mouth corners, brows, nose bridge, ...), ramped from onset to apex.
// Candidate frames carry intermediate deformation amplitudes, so every frame
// pair of a sample differs only inside that region.
//
// Also writes regions.txt ("region <sample_index> <x0> <y0> <x1> <y1>"),
// the analytic deformation box per sample, in index order.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed,
                      const std::string& out_dir);

std::vector<Box> load_regions(const std::string& dir);

// Class names the generator assigns, in label order.
const std::vector<std::string>& synth_class_names();

}  // namespace mmnet
