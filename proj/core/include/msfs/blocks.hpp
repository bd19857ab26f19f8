#pragma once

// Reusable network blocks: residual channel-attention block (RCAB), the
// stride-2 down-sampling module, and the RCAB + pixel-shuffle up-sampling
// module.

#include <string>

#include "msfs/layers.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

template <typename T>
struct Rcab {
  ConvLayer<T> body1, body2;          // 3x3, channel-preserving
  ConvLayer<T> att_reduce, att_expand;  // 1x1, c -> c/r -> c
  T slope = T(0.2);

  // out = x + attention(body(x)) (.) body(x)
  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x) const {
    Tensor<T> y = body2(tape, leaky_relu(tape, body1(tape, x), slope));
    Tensor<T> a = global_avg_pool(tape, y);
    a = sigmoid(tape, att_expand(tape, leaky_relu(tape, att_reduce(tape, a), slope)));
    return add(tape, x, mul_channel(tape, y, a));
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    body1.collect(prefix + ".body1", out);
    body2.collect(prefix + ".body2", out);
    att_reduce.collect(prefix + ".att_reduce", out);
    att_expand.collect(prefix + ".att_expand", out);
  }
};

template <typename T, typename Rng>
Rcab<T> make_rcab(Rng& rng, int channels, int ratio, T slope) {
  if (ratio < 1 || channels % ratio != 0)
    throw ShapeError("rcab: channels " + std::to_string(channels) +
                     " not divisible by attention ratio " + std::to_string(ratio));
  Rcab<T> r;
  r.body1 = make_conv<T>(rng, channels, channels, 3, 1, 1);
  r.body2 = make_conv<T>(rng, channels, channels, 3, 1, 1);
  r.att_reduce = make_conv<T>(rng, channels, channels / ratio, 1, 1, 0);
  r.att_expand = make_conv<T>(rng, channels / ratio, channels, 1, 1, 0);
  r.slope = slope;
  return r;
}

// 3x3 convolution with stride 2 followed by LeakyReLU; halves h and w.
template <typename T>
struct Downsample {
  ConvLayer<T> conv;  // stride 2, pad 1
  T slope = T(0.2);

  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x) const {
    if (x->shape.h % 2 != 0 || x->shape.w % 2 != 0)
      throw ShapeError("downsample: spatial extents must be even, got " + x->shape.str());
    return leaky_relu(tape, conv(tape, x), slope);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    conv.collect(prefix + ".conv", out);
  }
};

template <typename T, typename Rng>
Downsample<T> make_downsample(Rng& rng, int c_in, int c_out, T slope) {
  Downsample<T> d;
  d.conv = make_conv<T>(rng, c_in, c_out, 3, 2, 1);
  d.slope = slope;
  return d;
}

// RCAB, a channel-expanding 3x3 conv (c -> 2c), then pixel_shuffle(2):
// spatial extents double, channels halve.
template <typename T>
struct Upsample {
  Rcab<T> rcab;
  ConvLayer<T> expand;

  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x) const {
    Tensor<T> y = expand(tape, rcab(tape, x));
    if (y->shape.c % 4 != 0)
      throw ShapeError("upsample: expanded channels not divisible by 4");
    return pixel_shuffle(tape, y, 2);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    rcab.collect(prefix + ".rcab", out);
    expand.collect(prefix + ".expand", out);
  }
};

template <typename T, typename Rng>
Upsample<T> make_upsample(Rng& rng, int c_in, int ratio, T slope) {
  if (c_in % 2 != 0) throw ShapeError("upsample: input channels must be even");
  Upsample<T> u;
  u.rcab = make_rcab<T>(rng, c_in, ratio, slope);
  u.expand = make_conv<T>(rng, c_in, 2 * c_in, 3, 1, 1);
  return u;
}

}  // namespace msfs
