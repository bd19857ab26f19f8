#include "msfs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace msfs {

namespace {

int reflect(int i, int n) {
  // reflective padding without repeating the border sample twice past the edge
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  return k;
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0) throw ContractError("gaussian_blur: sigma must be positive");
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);

  GrayImage tmp{img.h, img.w, std::vector<float>(img.pix.size())};
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d)
        acc += k[d + radius] * img.pix[static_cast<std::size_t>(y) * img.w + reflect(x + d, img.w)];
      tmp.pix[static_cast<std::size_t>(y) * img.w + x] = static_cast<float>(acc);
    }
  GrayImage out{img.h, img.w, std::vector<float>(img.pix.size())};
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d)
        acc += k[d + radius] * tmp.pix[static_cast<std::size_t>(reflect(y + d, img.h)) * img.w + x];
      out.pix[static_cast<std::size_t>(y) * img.w + x] = static_cast<float>(acc);
    }
  return out;
}

GrayImage downscale_area(const GrayImage& img, int divisor) {
  if (divisor < 1) throw ContractError("downscale_area: divisor must be >= 1");
  if (divisor == 1) return img;
  const int oh = img.h / divisor, ow = img.w / divisor;
  if (oh < 1 || ow < 1) throw ContractError("downscale_area: image too small for divisor");
  GrayImage out{oh, ow, std::vector<float>(static_cast<std::size_t>(oh) * ow)};
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int dy = 0; dy < divisor; ++dy)
        for (int dx = 0; dx < divisor; ++dx)
          acc += img.pix[static_cast<std::size_t>(y * divisor + dy) * img.w + x * divisor + dx];
      out.pix[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(acc / (divisor * divisor));
    }
  return out;
}

FreqDecomposition freq_decompose(const GrayImage& img, double sigma, int scale) {
  if (sigma <= 0) throw ContractError("freq_decompose: sigma must be positive");
  if (scale != 1 && scale != 2 && scale != 4)
    throw ContractError("freq_decompose: scale must be 1, 2 or 4");
  FreqDecomposition out;
  out.scale = scale;
  GrayImage scaled = downscale_area(img, scale);
  out.lf = gaussian_blur(scaled, sigma);
  out.hf = GrayImage{scaled.h, scaled.w, std::vector<float>(scaled.pix.size())};
  // hf = img - lf. Rounding can leave lf + hf one ulp away from img, so
  // alternate re-deriving each band until the float sum reconstructs exactly.
  for (std::size_t i = 0; i < scaled.pix.size(); ++i) {
    const float v = scaled.pix[i];
    float lf = out.lf.pix[i];
    float hf = v - lf;
    for (int iter = 0; iter < 4 && lf + hf != v; ++iter) {
      lf = v - hf;
      if (lf + hf == v) break;
      hf = v - lf;
    }
    out.lf.pix[i] = lf;
    out.hf.pix[i] = hf;
  }
  return out;
}

GrayImage image_to_gray(const Image& img) {
  GrayImage g;
  g.h = img.h;
  g.w = img.w;
  g.pix = to_gray(img);
  return g;
}

double shannon_entropy(const GrayImage& img, int bins) {
  if (bins < 2) throw ContractError("shannon_entropy: bins must be >= 2");
  std::vector<std::size_t> counts(bins, 0);
  for (const float v : img.pix) {
    double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    int b = std::min(bins - 1, static_cast<int>(c * bins));
    ++counts[b];
  }
  const double n = static_cast<double>(img.pix.size());
  double h = 0;
  for (const std::size_t c : counts) {
    if (c == 0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 1) throw ContractError("make_histogram: bins must be >= 1");
  if (!(hi > lo)) hi = lo + 1.0;  // degenerate range (all values equal)
  Histogram hist;
  hist.lo = lo;
  hist.hi = hi;
  hist.p.assign(bins, 0.0);
  for (const double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::max(0, std::min(bins - 1, b));
    hist.p[b] += 1.0;
  }
  if (!values.empty())
    for (auto& p : hist.p) p /= static_cast<double>(values.size());
  return hist;
}

double js_divergence(const Histogram& p, const Histogram& q) {
  if (p.p.size() != q.p.size() || p.lo != q.lo || p.hi != q.hi)
    throw ContractError("js_divergence: histograms have mismatched binning");
  double js = 0;
  for (std::size_t i = 0; i < p.p.size(); ++i) {
    const double m = 0.5 * (p.p[i] + q.p[i]);
    if (p.p[i] > 0) js += 0.5 * p.p[i] * std::log2(p.p[i] / m);
    if (q.p[i] > 0) js += 0.5 * q.p[i] * std::log2(q.p[i] / m);
  }
  return std::max(0.0, js);
}

namespace {

std::vector<Image> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestError(dir + " is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string p = entry.path().string();
    if (p.ends_with(".png") || p.ends_with(".ppm") || p.ends_with(".pgm")) paths.push_back(p);
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IngestError(dir + ": no images found");
  std::vector<Image> corpus;
  corpus.reserve(paths.size());
  for (const auto& p : paths) corpus.push_back(load_image(p));
  return corpus;
}

}  // namespace

std::vector<EntropyRow> entropy_report(const std::vector<Image>& corpus_a,
                                       const std::vector<Image>& corpus_b,
                                       const EntropyReportOptions& opts) {
  if (corpus_a.empty() || corpus_b.empty()) throw IngestError("entropy_report: empty corpus");
  if (corpus_a.size() != corpus_b.size())
    throw IngestError("entropy_report: corpora are not paired (" +
                      std::to_string(corpus_a.size()) + " vs " +
                      std::to_string(corpus_b.size()) + " images)");

  std::vector<GrayImage> gray_a, gray_b;
  for (const auto& img : corpus_a) gray_a.push_back(image_to_gray(img));
  for (const auto& img : corpus_b) gray_b.push_back(image_to_gray(img));

  std::vector<EntropyRow> rows;
  for (const std::string& band : {std::string("HF"), std::string("LF")}) {
    for (const int scale : opts.scales) {
      EntropyRow row;
      row.band = band;
      row.scale = scale;
      row.n_images = gray_a.size();
      std::vector<double> ent_a, ent_b;
      for (std::size_t i = 0; i < gray_a.size(); ++i) {
        FreqDecomposition da = freq_decompose(gray_a[i], opts.sigma, scale);
        FreqDecomposition db = freq_decompose(gray_b[i], opts.sigma, scale);
        const GrayImage& ca = band == "HF" ? da.hf : da.lf;
        const GrayImage& cb = band == "HF" ? db.hf : db.lf;
        if (band == "HF") {
          // shift residuals into [0,1] around 0.5 before histogramming
          GrayImage sa = ca, sb = cb;
          for (auto& v : sa.pix) v += 0.5f;
          for (auto& v : sb.pix) v += 0.5f;
          ent_a.push_back(shannon_entropy(sa, opts.intensity_bins));
          ent_b.push_back(shannon_entropy(sb, opts.intensity_bins));
        } else {
          ent_a.push_back(shannon_entropy(ca, opts.intensity_bins));
          ent_b.push_back(shannon_entropy(cb, opts.intensity_bins));
        }
      }
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const double v : ent_a) { lo = std::min(lo, v); hi = std::max(hi, v); }
      for (const double v : ent_b) { lo = std::min(lo, v); hi = std::max(hi, v); }
      row.hist_a = make_histogram(ent_a, opts.entropy_bins, lo, hi);
      row.hist_b = make_histogram(ent_b, opts.entropy_bins, lo, hi);
      row.js_bits = js_divergence(row.hist_a, row.hist_b);
      double ma = 0, mb = 0;
      for (const double v : ent_a) ma += v;
      for (const double v : ent_b) mb += v;
      row.mean_entropy_a = ma / ent_a.size();
      row.mean_entropy_b = mb / ent_b.size();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<EntropyRow> entropy_report(const std::string& dir_a, const std::string& dir_b,
                                       const EntropyReportOptions& opts) {
  return entropy_report(load_corpus(dir_a), load_corpus(dir_b), opts);
}

void write_entropy_csv(const std::string& path, const std::vector<EntropyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "band,scale,js_bits,mean_entropy_a,mean_entropy_b,n_images\n";
  for (const auto& r : rows)
    out << r.band << "," << r.scale << "," << r.js_bits << "," << r.mean_entropy_a << ","
        << r.mean_entropy_b << "," << r.n_images << "\n";

  std::ofstream hist(path + ".hist.csv");
  if (!hist) throw FormatError("cannot write " + path + ".hist.csv");
  hist << "band,scale,bin,edge_lo,edge_hi,p_a,p_b\n";
  for (const auto& r : rows) {
    const std::size_t bins = r.hist_a.p.size();
    for (std::size_t b = 0; b < bins; ++b) {
      const double width = (r.hist_a.hi - r.hist_a.lo) / static_cast<double>(bins);
      hist << r.band << "," << r.scale << "," << b << "," << r.hist_a.lo + width * b << ","
           << r.hist_a.lo + width * (b + 1) << "," << r.hist_a.p[b] << "," << r.hist_b.p[b]
           << "\n";
    }
  }
}

}  // namespace msfs
