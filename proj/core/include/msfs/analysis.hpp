#pragma once

// Frequency/entropy analysis of image corpora: Gaussian low-pass
// decomposition into LF and HF components at several scales, per-image
// Shannon entropy, and Jensen-Shannon divergence between the entropy
// distributions of two corpora.

#include <string>
#include <vector>

#include "msfs/common.hpp"
#include "msfs/image.hpp"

namespace msfs {

// Grayscale plane helper type.
struct GrayImage {
  int h = 0, w = 0;
  std::vector<float> pix;
};

struct FreqDecomposition {
  GrayImage lf;  // Gaussian-blurred input
  GrayImage hf;  // input - lf, elementwise; lf + hf reconstructs exactly
  int scale = 1;  // downscale divisor: 1, 2 or 4
};

// Separable Gaussian blur, kernel radius ceil(3*sigma), reflective padding.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// Area-averaging downscale by an integer divisor; trailing rows/columns
// that do not fill a block are dropped.
GrayImage downscale_area(const GrayImage& img, int divisor);

// Downscales to the target scale, then splits into LF (blur) and HF
// (residual) components.
FreqDecomposition freq_decompose(const GrayImage& img, double sigma, int scale);

GrayImage image_to_gray(const Image& img);

// Intensity-histogram entropy in bits over [0,1]; empty bins are skipped.
double shannon_entropy(const GrayImage& img, int bins = 256);

// Normalized histogram with shared bin edges.
struct Histogram {
  double lo = 0, hi = 1;
  std::vector<double> p;
};

Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi);

// 0.5*KL(p||m) + 0.5*KL(q||m) with m = (p+q)/2, log base 2; in [0,1] bits.
double js_divergence(const Histogram& p, const Histogram& q);

struct EntropyRow {
  std::string band;  // "HF" or "LF"
  int scale = 1;     // 1, 2 or 4
  double js_bits = 0;
  double mean_entropy_a = 0;
  double mean_entropy_b = 0;
  std::size_t n_images = 0;
  Histogram hist_a, hist_b;
};

struct EntropyReportOptions {
  double sigma = 2.0;
  std::vector<int> scales = {1, 2, 4};
  int intensity_bins = 256;  // for per-image entropy
  int entropy_bins = 64;     // for the entropy-value distributions
};

// Compares two image corpora (directories of .png/.ppm files). For each
// (band, scale) cell: the entropy distributions of both corpora and their
// JS divergence.
std::vector<EntropyRow> entropy_report(const std::string& dir_a, const std::string& dir_b,
                                       const EntropyReportOptions& opts);

// In-memory variant for already-loaded corpora.
std::vector<EntropyRow> entropy_report(const std::vector<Image>& corpus_a,
                                       const std::vector<Image>& corpus_b,
                                       const EntropyReportOptions& opts);

// CSV with columns band,scale,js_bits,mean_entropy_a,mean_entropy_b,n_images;
// histogram sidecar (one row per bin) written next to it as <path>.hist.csv.
void write_entropy_csv(const std::string& path, const std::vector<EntropyRow>& rows);

}  // namespace msfs
