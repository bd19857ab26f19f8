#include "msfs/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "msfs/common.hpp"

namespace msfs {

double psnr(const Image& a, const Image& b, double peak) {
  if (a.channels != b.channels || a.h != b.h || a.w != b.w)
    throw ShapeError("psnr: image shapes differ");
  double mse = 0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    const double d = static_cast<double>(a.pix[i]) - b.pix[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pix.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow * kWindow);
  const int r = kWindow / 2;
  double total = 0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(y * y + x * x) / (2.0 * kSigma * kSigma));
      w[(y + r) * kWindow + (x + r)] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}
}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.channels != b.channels || a.h != b.h || a.w != b.w)
    throw ShapeError("ssim: image shapes differ");
  if (a.h < kWindow || a.w < kWindow)
    throw ContractError("ssim: images must be at least 11x11");

  const std::vector<float> ga = to_gray(a);
  const std::vector<float> gb = to_gray(b);
  static const std::vector<double> win = gaussian_window();

  const double c1 = kK1 * kK1;  // dynamic range L = 1
  const double c2 = kK2 * kK2;
  const int r = kWindow / 2;
  double acc = 0;
  std::size_t count = 0;
  for (int y = r; y < a.h - r; ++y) {
    for (int x = r; x < a.w - r; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double wv = win[(dy + r) * kWindow + (dx + r)];
          mu_a += wv * ga[static_cast<std::size_t>(y + dy) * a.w + (x + dx)];
          mu_b += wv * gb[static_cast<std::size_t>(y + dy) * a.w + (x + dx)];
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double wv = win[(dy + r) * kWindow + (dx + r)];
          const double da = ga[static_cast<std::size_t>(y + dy) * a.w + (x + dx)] - mu_a;
          const double db = gb[static_cast<std::size_t>(y + dy) * a.w + (x + dx)] - mu_b;
          var_a += wv * da * da;
          var_b += wv * db * db;
          cov += wv * da * db;
        }
      const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      acc += num / den;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace msfs
