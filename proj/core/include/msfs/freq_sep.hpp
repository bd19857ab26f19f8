#pragma once

// Octave Convolution and the Frequency Separation Module.
//
// An OctConv operates on a two-band feature representation: a high-frequency
// band at full spatial size and a low-frequency band at half size. Four
// convolution paths (H->H, L->H, L->L, H->L) carry intra- and inter-band
// information; pooling and nearest up-sampling bridge the scale mismatch.
//
// FSM is a 1x1 -> 3x3 -> 1x1 OctConv stack with a residual connection; the
// middle OctConv's output pair is exposed as the module's LF/HF taps.

#include <cmath>
#include <string>

#include "msfs/layers.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

template <typename T>
struct FrequencyPair {
  Tensor<T> hf;  // (n, (1-alpha)*c, h, w); null when alpha == 1
  Tensor<T> lf;  // (n, alpha*c, h/2, w/2); null when alpha == 0

  void validate() const {
    if (!hf && !lf) throw ShapeError("FrequencyPair: both bands empty");
    if (hf && lf) {
      const Shape& h = hf->shape;
      const Shape& l = lf->shape;
      if (l.h * 2 != h.h || l.w * 2 != h.w)
        throw ShapeError("FrequencyPair: LF spatial extents " + l.str() +
                         " are not half of HF " + h.str());
      if (l.n != h.n) throw ShapeError("FrequencyPair: batch mismatch");
    }
  }
};

namespace detail {
inline int band_channels(double alpha, int c, const char* what) {
  const double exact = alpha * c;
  const int rounded = static_cast<int>(std::lround(exact));
  if (std::abs(exact - rounded) > 1e-9)
    throw ShapeError(std::string("octconv: ") + what + " * channels is not integral");
  return rounded;
}
}  // namespace detail

template <typename T>
struct OctConv {
  double alpha_in = 0.0;
  double alpha_out = 0.0;
  int ksize = 1;
  // Paths exist only when both their bands are non-empty.
  ConvLayer<T> hh, lh, ll, hl;
  bool has_hh = false, has_lh = false, has_ll = false, has_hl = false;

  FrequencyPair<T> operator()(Tape<T>* tape, const FrequencyPair<T>& x) const {
    x.validate();
    if ((alpha_in > 0.0) != static_cast<bool>(x.lf) || (alpha_in < 1.0) != static_cast<bool>(x.hf))
      throw ShapeError("octconv: input bands inconsistent with alpha_in");
    if (x.hf && alpha_out > 0.0 && (x.hf->shape.h % 2 != 0 || x.hf->shape.w % 2 != 0))
      throw ShapeError("octconv: odd spatial extent " + x.hf->shape.str() +
                       " with an active LF path");

    FrequencyPair<T> y;
    if (alpha_out < 1.0) {
      Tensor<T> acc;
      if (has_hh) acc = hh(tape, x.hf);
      if (has_lh) {
        Tensor<T> from_lf = resample2(tape, lh(tape, x.lf), Resample::up_nearest);
        acc = acc ? add(tape, acc, from_lf) : from_lf;
      }
      y.hf = acc;
    }
    if (alpha_out > 0.0) {
      Tensor<T> acc;
      if (has_ll) acc = ll(tape, x.lf);
      if (has_hl) {
        Tensor<T> from_hf = hl(tape, resample2(tape, x.hf, Resample::pool_avg));
        acc = acc ? add(tape, acc, from_hf) : from_hf;
      }
      y.lf = acc;
    }
    y.validate();
    return y;
  }

  // Convenience for the degenerate alpha_in = 0 / alpha_out = 0 cases.
  Tensor<T> apply_plain(Tape<T>* tape, const Tensor<T>& x) const {
    FrequencyPair<T> out = (*this)(tape, FrequencyPair<T>{x, nullptr});
    return out.hf;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    if (has_hh) hh.collect(prefix + ".hh", out);
    if (has_lh) lh.collect(prefix + ".lh", out);
    if (has_ll) ll.collect(prefix + ".ll", out);
    if (has_hl) hl.collect(prefix + ".hl", out);
  }
};

template <typename T, typename Rng>
OctConv<T> make_octconv(Rng& rng, int c_in, int c_out, double alpha_in, double alpha_out,
                        int ksize) {
  if (alpha_in < 0 || alpha_in > 1 || alpha_out < 0 || alpha_out > 1)
    throw ShapeError("octconv: alpha must lie in [0,1]");
  OctConv<T> oc;
  oc.alpha_in = alpha_in;
  oc.alpha_out = alpha_out;
  oc.ksize = ksize;
  const int in_l = detail::band_channels(alpha_in, c_in, "alpha_in");
  const int in_h = c_in - in_l;
  const int out_l = detail::band_channels(alpha_out, c_out, "alpha_out");
  const int out_h = c_out - out_l;
  const int pad = ksize / 2;
  if (in_h > 0 && out_h > 0) {
    oc.hh = make_conv<T>(rng, in_h, out_h, ksize, 1, pad);
    oc.has_hh = true;
  }
  if (in_l > 0 && out_h > 0) {
    oc.lh = make_conv<T>(rng, in_l, out_h, ksize, 1, pad);
    oc.has_lh = true;
  }
  if (in_l > 0 && out_l > 0) {
    oc.ll = make_conv<T>(rng, in_l, out_l, ksize, 1, pad);
    oc.has_ll = true;
  }
  if (in_h > 0 && out_l > 0) {
    oc.hl = make_conv<T>(rng, in_h, out_l, ksize, 1, pad);
    oc.has_hl = true;
  }
  return oc;
}

template <typename T>
struct Fsm {
  OctConv<T> split;  // 1x1, alpha 0 -> 0.5
  OctConv<T> mid;    // 3x3, alpha 0.5 -> 0.5; its output is the tap pair
  OctConv<T> merge;  // 1x1, alpha 0.5 -> 0

  // out = x + merge(mid(split(x))); taps (when requested) are the middle
  // OctConv's LF/HF outputs.
  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x, FrequencyPair<T>* taps = nullptr) const {
    if (x->shape.h % 2 != 0 || x->shape.w % 2 != 0 || x->shape.c % 2 != 0)
      throw ShapeError("fsm: spatial and channel extents must be even, got " + x->shape.str());
    FrequencyPair<T> bands = split(tape, FrequencyPair<T>{x, nullptr});
    bands = mid(tape, bands);
    if (taps) *taps = bands;
    Tensor<T> fused = merge(tape, bands).hf;
    return add(tape, x, fused);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    split.collect(prefix + ".split", out);
    mid.collect(prefix + ".mid", out);
    merge.collect(prefix + ".merge", out);
  }
};

template <typename T, typename Rng>
Fsm<T> make_fsm(Rng& rng, int channels) {
  if (channels % 2 != 0) throw ShapeError("fsm: channel count must be even");
  Fsm<T> f;
  f.split = make_octconv<T>(rng, channels, channels, 0.0, 0.5, 1);
  f.mid = make_octconv<T>(rng, channels, channels, 0.5, 0.5, 3);
  f.merge = make_octconv<T>(rng, channels, channels, 0.5, 0.0, 1);
  return f;
}

}  // namespace msfs
