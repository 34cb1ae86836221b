#include "skinrf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
  if (w < 0 || h < 0 || c < 1) throw UsageError("invalid image shape");
}

Image Image::leading_channels(int count) const {
  if (count > channels) throw UsageError("leading_channels: image has only " + std::to_string(channels) + " channels");
  Image out(width, height, count);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < count; ++c) out.at(x, y, c) = at(x, y, c);
    }
  }
  return out;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image quantized(const Image& img) {
  Image out = img;
  for (double& v : out.data) v = quantize(v) / 255.0;
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw UsageError("PNG output supports 1, 3 or 4 channels, got " + std::to_string(channels));
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  const int color_type = color_type_for(img.channels);
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  std::vector<unsigned char> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), quantize);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3 && channels != 4) throw UsageError("read_png: unsupported channel count");
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ParseError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<unsigned char> bytes;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  const int file_channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  bytes.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(static_cast<int>(w), static_cast<int>(h), channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      const unsigned char* px = rows[y] + x * static_cast<png_uint_32>(file_channels);
      double rgba[4] = {0, 0, 0, 1};
      if (file_channels <= 2) {
        rgba[0] = rgba[1] = rgba[2] = px[0] / 255.0;
        if (file_channels == 2) rgba[3] = px[1] / 255.0;
      } else {
        for (int c = 0; c < file_channels; ++c) rgba[c] = px[c] / 255.0;
      }
      const int xi = static_cast<int>(x), yi = static_cast<int>(y);
      if (channels == 1) {
        out.at(xi, yi, 0) = rgba[0];
      } else {
        for (int c = 0; c < channels; ++c) out.at(xi, yi, c) = rgba[c];
      }
    }
  }
  return out;
}

}  // namespace skinrf
