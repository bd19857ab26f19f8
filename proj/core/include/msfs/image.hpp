#pragma once

// Planar float image in [0,1] plus PNG / binary-PPM file IO and
// conversions to and from network tensors.

#include <string>
#include <vector>

#include "msfs/common.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

struct Image {
  int channels = 0;  // 1 or 3
  int h = 0, w = 0;
  std::vector<float> pix;  // planar, channel-major, values in [0,1]

  float at(int c, int y, int x) const {
    return pix[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  float& at(int c, int y, int x) {
    return pix[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  std::size_t size() const { return pix.size(); }
};

Image make_image(int channels, int h, int w);

// Dispatches on extension: .png, .ppm / .pgm. Throws FormatError on
// undecodable files.
Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& img);

// ITU-R BT.601 luma; identity for single-channel images.
std::vector<float> to_gray(const Image& img);

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  auto t = make_tensor<T>({1, img.channels, img.h, img.w});
  for (std::size_t i = 0; i < img.pix.size(); ++i) t->data[i] = static_cast<T>(img.pix[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int batch_index = 0) {
  Image img = make_image(t->shape.c, t->shape.h, t->shape.w);
  const std::size_t plane = img.pix.size();
  for (std::size_t i = 0; i < plane; ++i) {
    float v = static_cast<float>(t->data[batch_index * plane + i]);
    img.pix[i] = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  }
  return img;
}

}  // namespace msfs
