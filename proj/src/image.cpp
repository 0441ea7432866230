#include "mmnet/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmnet/error.hpp"

namespace mmnet {

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  in >> tok;
  return tok;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  if (next_token(in) != "P6") throw IoError("not a P6 PPM file: " + path);
  Image img;
  int maxval = 0;
  try {
    img.width = std::stoi(next_token(in));
    img.height = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PPM header: " + path);
  }
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw IoError("unsupported PPM geometry or depth: " + path);
  in.get();  // single whitespace after maxval
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError("truncated PPM data: " + path);
  return img;
}

std::string encode_ppm(const Image& img) {
  std::ostringstream os;
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  return os.str();
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.pixels.size() !=
      static_cast<std::size_t>(img.width) * img.height * 3)
    throw IoError("image buffer does not match its dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  const std::string data = encode_ppm(img);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing image: " + path);
}

std::string encode_pgm(int height, int width,
                       const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height)
    throw IoError("grayscale buffer does not match its dimensions");
  std::ostringstream os;
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()),
           static_cast<std::streamsize>(gray.size()));
  return os.str();
}

void write_pgm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  const std::string data = encode_pgm(height, width, gray);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing image: " + path);
}

Tensor image_to_tensor(const Image& img) {
  const int h = img.height, w = img.width;
  std::vector<double> v(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        v[(static_cast<std::size_t>(c) * h + y) * w + x] =
            static_cast<double>(img.at(y, x, c)) / 256.0;
  return Tensor::from_vector({3, h, w}, std::move(v));
}

Image tensor_to_image(const Tensor& t) {
  if (t.ndim() != 3 || t.dim(0) != 3)
    throw DimensionError("tensor_to_image expects [3,H,W]");
  Image img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * 3);
  auto data = t.data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v =
            data[(static_cast<std::size_t>(c) * img.height + y) * img.width +
                 x];
        const double q = std::nearbyint(v * 256.0);
        img.at(y, x, c) =
            static_cast<std::uint8_t>(q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q));
      }
  return img;
}

}  // namespace mmnet
