#include "msfs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>

#include "msfs/analysis.hpp"
#include "msfs/common.hpp"

namespace fs = std::filesystem;

namespace msfs {

namespace {

bool is_image_file(const std::string& p) {
  return p.ends_with(".png") || p.ends_with(".ppm") || p.ends_with(".pgm");
}

std::map<std::string, std::string> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IngestError(dir + " is not a directory");
  std::map<std::string, std::string> out;  // filename -> full path
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (is_image_file(name)) out[name] = entry.path().string();
  }
  return out;
}

Image load_validated(const std::string& path) {
  Image img;
  try {
    img = load_image(path);
  } catch (const FormatError& e) {
    throw IngestError(std::string("undecodable image: ") + e.what());
  }
  if (img.h % 4 != 0 || img.w % 4 != 0)
    throw IngestError(path + ": spatial extents " + std::to_string(img.h) + "x" +
                      std::to_string(img.w) + " not divisible by 4");
  return img;
}

}  // namespace

PairedDataset ingest_pairs(const std::string& blurry_dir, const std::string& sharp_dir) {
  const auto blurry = list_images(blurry_dir);
  const auto sharp = list_images(sharp_dir);
  for (const auto& [name, path] : blurry)
    if (!sharp.count(name)) throw IngestError("unpaired blurry file: " + path);
  for (const auto& [name, path] : sharp)
    if (!blurry.count(name)) throw IngestError("unpaired sharp file: " + path);

  PairedDataset ds;
  for (const auto& [name, bpath] : blurry) {  // std::map iterates name-sorted
    ImagePair pair;
    pair.name = name;
    pair.blurry = load_validated(bpath);
    pair.sharp = load_validated(sharp.at(name));
    if (pair.blurry.h != pair.sharp.h || pair.blurry.w != pair.sharp.w ||
        pair.blurry.channels != pair.sharp.channels)
      throw IngestError(name + ": blurry and sharp dimensions differ");
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

namespace {

float quantize8(float v) {
  v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return std::round(v * 255.f) / 255.f;
}

Image blur_image(const Image& img, double sigma) {
  Image out = make_image(img.channels, img.h, img.w);
  for (int c = 0; c < img.channels; ++c) {
    GrayImage plane{img.h, img.w,
                    std::vector<float>(img.pix.begin() + static_cast<std::size_t>(c) * img.h * img.w,
                                       img.pix.begin() + static_cast<std::size_t>(c + 1) * img.h * img.w)};
    GrayImage blurred = gaussian_blur(plane, sigma);
    std::copy(blurred.pix.begin(), blurred.pix.end(),
              out.pix.begin() + static_cast<std::size_t>(c) * img.h * img.w);
  }
  return out;
}

}  // namespace

PairedDataset synth_corpus(int n, int size, unsigned seed) {
  if (size % 4 != 0) throw ContractError("synth_corpus: size must be divisible by 4");
  if (n < 1) throw ContractError("synth_corpus: n must be >= 1");

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PairedDataset ds;
  for (int i = 0; i < n; ++i) {
    Image sharp = make_image(3, size, size);
    // smooth background ramp per channel
    for (int c = 0; c < 3; ++c) {
      const double a = unit(rng), bx = unit(rng) - 0.5, by = unit(rng) - 0.5;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          sharp.at(c, y, x) = static_cast<float>(
              a + bx * (static_cast<double>(x) / size) + by * (static_cast<double>(y) / size));
    }
    // hard-edged rectangles
    const int n_rects = 3 + static_cast<int>(unit(rng) * 6);
    for (int rct = 0; rct < n_rects; ++rct) {
      const int x0 = static_cast<int>(unit(rng) * size);
      const int y0 = static_cast<int>(unit(rng) * size);
      const int rw = 2 + static_cast<int>(unit(rng) * size / 2);
      const int rh = 2 + static_cast<int>(unit(rng) * size / 2);
      float col[3] = {static_cast<float>(unit(rng)), static_cast<float>(unit(rng)),
                      static_cast<float>(unit(rng))};
      for (int y = y0; y < std::min(size, y0 + rh); ++y)
        for (int x = x0; x < std::min(size, x0 + rw); ++x)
          for (int c = 0; c < 3; ++c) sharp.at(c, y, x) = col[c];
    }
    // a few single-pixel-wide lines for fine texture
    const int n_lines = 2 + static_cast<int>(unit(rng) * 4);
    for (int ln = 0; ln < n_lines; ++ln) {
      const bool horiz = unit(rng) < 0.5;
      const int pos = static_cast<int>(unit(rng) * size);
      const float v = static_cast<float>(unit(rng));
      for (int t = 0; t < size; ++t)
        for (int c = 0; c < 3; ++c)
          sharp.at(c, horiz ? pos : t, horiz ? t : pos) = v;
    }
    for (auto& v : sharp.pix) v = quantize8(v);

    const double sigma = 1.0 + 2.0 * unit(rng);
    Image blurry = blur_image(sharp, sigma);
    for (auto& v : blurry.pix) v = quantize8(v);

    ImagePair pair;
    char name[32];
    std::snprintf(name, sizeof(name), "%03d.ppm", i);
    pair.name = name;
    pair.sharp = std::move(sharp);
    pair.blurry = std::move(blurry);
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

void write_corpus(const PairedDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "blurry");
  fs::create_directories(fs::path(dir) / "sharp");
  for (const auto& pair : ds.pairs) {
    save_image((fs::path(dir) / "blurry" / pair.name).string(), pair.blurry);
    save_image((fs::path(dir) / "sharp" / pair.name).string(), pair.sharp);
  }
}

}  // namespace msfs
