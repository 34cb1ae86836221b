#include "skinrf/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "skinrf/error.hpp"

namespace skinrf {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw UsageError(std::string(what) + ": images differ in shape");
}

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of a single-channel plane (width x height, row-major).
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height, const std::vector<double>& w) {
  const int ow = width - kSsimWindow + 1;
  const int oh = height - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += w[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y * width + x + i)];
      rows[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += w[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  if (se == 0.0) return kPsnrIdentical;
  const double mse = se / static_cast<double>(a.data.size());
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw SizeError("ssim: image smaller than the " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) +
                    " window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const std::vector<double> w = gaussian_window();
  const std::size_t n = static_cast<std::size_t>(a.width) * static_cast<std::size_t>(a.height);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y * a.width + x);
        pa[i] = a.at(x, y, c);
        pb[i] = b.at(x, y, c);
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
      }
    }
    const auto mu_a = filter_valid(pa, a.width, a.height, w);
    const auto mu_b = filter_valid(pb, a.width, a.height, w);
    const auto e_aa = filter_valid(paa, a.width, a.height, w);
    const auto e_bb = filter_valid(pbb, a.width, a.height, w);
    const auto e_ab = filter_valid(pab, a.width, a.height, w);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

MetricReport MetricReport::from(std::vector<ImageMetrics> images) {
  MetricReport r;
  r.images = std::move(images);
  if (r.images.empty()) return r;
  for (const ImageMetrics& m : r.images) {
    r.mean_psnr += m.psnr;
    r.mean_ssim += m.ssim;
  }
  r.mean_psnr /= static_cast<double>(r.images.size());
  r.mean_ssim /= static_cast<double>(r.images.size());
  return r;
}

std::string MetricReport::csv() const {
  std::ostringstream out;
  out << std::setprecision(10) << "image,psnr,ssim\n";
  for (const ImageMetrics& m : images) out << m.name << "," << m.psnr << "," << m.ssim << "\n";
  out << "mean," << mean_psnr << "," << mean_ssim << "\n";
  return out.str();
}

std::string MetricReport::json() const {
  // JSON has no infinity; identical images are reported as the string "inf".
  auto value = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  nlohmann::json doc;
  doc["images"] = nlohmann::json::array();
  for (const ImageMetrics& m : images) doc["images"].push_back({{"name", m.name}, {"psnr", value(m.psnr)}, {"ssim", m.ssim}});
  doc["mean_psnr"] = value(mean_psnr);
  doc["mean_ssim"] = mean_ssim;
  return doc.dump(2);
}

}  // namespace skinrf
