#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aseg {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;
};

// Decodes a PNG to 8-bit grayscale; palette/RGB/alpha/16-bit inputs are
// converted on the fly.
GrayImage read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, const GrayImage& image);

// Bilinear resampling to float intensities (still on the 0..255 scale).
std::vector<float> resize_bilinear(const GrayImage& src, int out_width, int out_height);

// Nearest-neighbor resampling; keeps binary rasters two-valued.
GrayImage resize_nearest(const GrayImage& src, int out_width, int out_height);

}  // namespace aseg
