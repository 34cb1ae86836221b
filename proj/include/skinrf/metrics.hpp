#pragma once

#include <limits>
#include <string>
#include <vector>

#include "skinrf/image.hpp"

namespace skinrf {

// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(1 / MSE) over all pixels and channels.
double psnr(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
// averaged over valid window positions, per channel, then over channels.
double ssim(const Image& a, const Image& b);

struct ImageMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  static MetricReport from(std::vector<ImageMetrics> images);
  std::string csv() const;
  std::string json() const;
};

}  // namespace skinrf
