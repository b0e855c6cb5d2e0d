#include "core/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "core/error.hpp"

namespace aseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png_gray(const std::string& path) {
  FileHandle file(std::fopen(path.c_str(), "rb"));
  if (!file) fail_io("cannot open image file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_format("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_format("png info allocation failed");
  }

  GrayImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_format("not a decodable PNG file: " + path);
  }

  png_init_io(png, file.get());
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_PALETTE ||
      color_type == PNG_COLOR_TYPE_RGB_ALPHA) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  if (image.width < 1 || image.height < 1) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_format("zero-extent image: " + path);
  }

  image.pixels.resize(static_cast<size_t>(image.width) * image.height);
  rows.resize(static_cast<size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<size_t>(y)] = image.pixels.data() + static_cast<size_t>(y) * image.width;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png_gray(const std::string& path, const GrayImage& image) {
  require_arg(image.width >= 1 && image.height >= 1, "write_png_gray: zero-extent image");
  require_arg(image.pixels.size() == static_cast<size_t>(image.width) * image.height,
              "write_png_gray: pixel buffer size mismatch");
  FileHandle file(std::fopen(path.c_str(), "wb"));
  if (!file) fail_io("cannot write image file: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_format("png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_format("png info allocation failed");
  }
  std::vector<png_bytep> rows(static_cast<size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_io("png encode failed: " + path);
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(image.pixels.data()) +
                                   static_cast<size_t>(y) * image.width;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<float> resize_bilinear(const GrayImage& src, int out_width, int out_height) {
  require_arg(src.width >= 1 && src.height >= 1, "resize_bilinear: empty source");
  require_arg(out_width >= 1 && out_height >= 1, "resize_bilinear: empty target");
  std::vector<float> out(static_cast<size_t>(out_width) * out_height);
  const double sx = static_cast<double>(src.width) / out_width;
  const double sy = static_cast<double>(src.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    const int y1 = std::min(std::max(y0 + 1, 0), src.height - 1);
    y0 = std::min(std::max(y0, 0), src.height - 1);
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const int x1 = std::min(std::max(x0 + 1, 0), src.width - 1);
      x0 = std::min(std::max(x0, 0), src.width - 1);
      const double top = src.pixels[static_cast<size_t>(y0) * src.width + x0] * (1.0 - tx) +
                         src.pixels[static_cast<size_t>(y0) * src.width + x1] * tx;
      const double bottom = src.pixels[static_cast<size_t>(y1) * src.width + x0] * (1.0 - tx) +
                            src.pixels[static_cast<size_t>(y1) * src.width + x1] * tx;
      out[static_cast<size_t>(oy) * out_width + ox] =
          static_cast<float>(top * (1.0 - ty) + bottom * ty);
    }
  }
  return out;
}

GrayImage resize_nearest(const GrayImage& src, int out_width, int out_height) {
  require_arg(src.width >= 1 && src.height >= 1, "resize_nearest: empty source");
  require_arg(out_width >= 1 && out_height >= 1, "resize_nearest: empty target");
  GrayImage out;
  out.width = out_width;
  out.height = out_height;
  out.pixels.resize(static_cast<size_t>(out_width) * out_height);
  const double sx = static_cast<double>(src.width) / out_width;
  const double sy = static_cast<double>(src.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const int iy = std::min(static_cast<int>((oy + 0.5) * sy), src.height - 1);
    for (int ox = 0; ox < out_width; ++ox) {
      const int ix = std::min(static_cast<int>((ox + 0.5) * sx), src.width - 1);
      out.pixels[static_cast<size_t>(oy) * out_width + ox] =
          src.pixels[static_cast<size_t>(iy) * src.width + ix];
    }
  }
  return out;
}

}  // namespace aseg
