#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmnet/tensor.hpp"

namespace mmnet {

// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height*width*3

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Binary PPM (P6), the on-disk format for all color images.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
std::string encode_ppm(const Image& img);

// Binary PGM (P5) for grayscale attention maps.
void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& gray);
std::string encode_pgm(int height, int width,
                       const std::vector<std::uint8_t>& gray);

// In-memory form: [3,H,W] doubles with byte b mapping to b/256, so the 8-bit
// roundtrip is exact and frame values sit on a dyadic grid in [0,1).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

}  // namespace mmnet
