// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "mobo/errors.hpp"
#include "mobo/flowsampler/sampler.hpp"

namespace mobo::flowsampler {

std::vector<unsigned char> encode_ppm(const backbones::Image& img) {
  if (img.channels != 3) throw DimensionError("ppm: expected 3 channels, got " + std::to_string(img.channels));
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (double p : img.pixels) out.push_back(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
  return out;
}

void write_ppm(const std::filesystem::path& path, const backbones::Image& img) {
  auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

backbones::Image decode_ppm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("ppm: missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: missing P6 magic");
  pos = 2;
  const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w == 0 || h == 0) throw FormatError("ppm: zero dimension");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: bad header terminator");
  ++pos;
  const std::size_t n = w * h * 3;
  if (bytes.size() - pos < n) {
    throw FormatError("ppm: truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " +
                      std::to_string(n) + " bytes)");
  }
  auto img = backbones::Image::blank(h, w, 3);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = bytes[pos + i] / 255.0;
  return img;
}

backbones::Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace mobo::flowsampler
