#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace light {

// 8-bit RGB, interleaved row-major (H*W*3 bytes).
struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;
};

void write_png_rgb8(const std::string& path, const RgbImage& img);
RgbImage read_png_rgb8(const std::string& path);

}  // namespace light
