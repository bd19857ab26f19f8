#pragma once

// Small building blocks shared by the network modules: a convolution layer
// with owned parameters, fan-in-scaled initialization, and the named
// parameter list used by the optimizer and checkpoints.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "msfs/tensor.hpp"

namespace msfs {

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // (c_out, c_in, k, k)
  Tensor<T> b;  // (1, c_out, 1, 1)
  int stride = 1;
  int padding = 0;

  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x) const {
    return conv2d(tape, x, w, b, stride, padding);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

// Uniform init in [-s, s] with s = 1/sqrt(fan_in); biases start at zero.
template <typename T, typename Rng>
ConvLayer<T> make_conv(Rng& rng, int c_in, int c_out, int k, int stride, int padding) {
  ConvLayer<T> layer;
  const T bound = T(1) / std::sqrt(static_cast<T>(c_in * k * k));
  layer.w = uniform_tensor<T>({c_out, c_in, k, k}, rng, -bound, bound, true);
  layer.b = make_tensor<T>({1, c_out, 1, 1}, true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

}  // namespace msfs
