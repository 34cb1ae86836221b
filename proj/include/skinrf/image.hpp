#pragma once

#include <filesystem>
#include <vector>

namespace skinrf {

// Row-major float image with interleaved channels, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                    static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                    static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(c)];
  }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
  // First `count` channels as a new image.
  Image leading_channels(int count) const;
};

// 8-bit quantisation used at PNG boundaries: round(clamp(v, 0, 1) * 255).
unsigned char quantize(double v);
Image quantized(const Image& img);

// Writes 8-bit gray (1 channel), RGB (3) or RGBA (4).
void write_png(const std::filesystem::path& path, const Image& img);
// Reads any 8-bit PNG and converts to `channels` (1, 3 or 4).
Image read_png(const std::filesystem::path& path, int channels);

}  // namespace skinrf
