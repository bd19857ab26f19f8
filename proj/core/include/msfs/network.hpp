#pragma once

// The full deblurring network: shallow conv -> 3-scale encoder with FSMs ->
// RCAB bottleneck -> 3-scale decoder with FSMs and cross-scale feature
// fusion -> output conv -> global input residual. A second pass over the
// produced sharp image reuses the encoder weights to extract the LF/HF
// features the losses compare against.

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "msfs/blocks.hpp"
#include "msfs/freq_sep.hpp"
#include "msfs/layers.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

struct NetworkConfig {
  int in_channels = 3;
  int base_channels = 16;
  int scales = 3;  // scale levels k = 0 (full), 1 (half), 2 (quarter)
  int fsm_per_scale = 1;
  int rcab_count = 4;
  int attention_ratio = 4;
  double leaky_slope = 0.2;
  bool use_fsm = true;    // ablation: replace FSMs with plain residual convs
  bool use_csffm = true;  // ablation: drop cross-scale fusion

  void validate() const {
    if (scales != 3) throw ContractError("NetworkConfig: scales must be 3");
    if (base_channels % 4 != 0)
      throw ContractError("NetworkConfig: base_channels must be divisible by 4");
    if (fsm_per_scale < 1 || rcab_count < 0)
      throw ContractError("NetworkConfig: invalid block counts");
  }
};

// Per-scale feature records feeding the consistency and contrastive losses.
// k = 0,1,2 is the scale level (full, half, quarter resolution).
template <typename T>
struct ScaleTaps {
  std::array<Tensor<T>, 3> en_lf, en_hf;    // encoder FSM taps over the blurry input
  std::array<Tensor<T>, 3> de_hf;           // decoder FSM taps
  std::array<Tensor<T>, 3> out_lf, out_hf;  // reused-encoder taps over the output image

  bool forward_done() const {
    for (int k = 0; k < 3; ++k)
      if (!en_lf[k] || !en_hf[k] || !de_hf[k]) return false;
    return true;
  }
  bool output_done() const {
    for (int k = 0; k < 3; ++k)
      if (!out_lf[k] || !out_hf[k]) return false;
    return true;
  }
};

// One scale level of the encoder/decoder: a chain of FSMs, or (for the
// "w/o FSM" ablation) a plain residual 3x3 conv whose undecomposed output
// stands in for both frequency taps.
template <typename T>
struct ScaleBlock {
  bool use_fsm = true;
  std::vector<Fsm<T>> fsms;
  ConvLayer<T> plain;

  Tensor<T> operator()(Tape<T>* tape, Tensor<T> x, Tensor<T>* tap_lf, Tensor<T>* tap_hf) const {
    if (use_fsm) {
      FrequencyPair<T> taps;
      for (std::size_t i = 0; i < fsms.size(); ++i)
        x = fsms[i](tape, x, i + 1 == fsms.size() ? &taps : nullptr);
      if (tap_lf) *tap_lf = taps.lf;
      if (tap_hf) *tap_hf = taps.hf;
      return x;
    }
    Tensor<T> out = add(tape, x, plain(tape, x));
    if (tap_lf) *tap_lf = out;
    if (tap_hf) *tap_hf = out;
    return out;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    if (use_fsm) {
      for (std::size_t i = 0; i < fsms.size(); ++i)
        fsms[i].collect(prefix + ".fsm" + std::to_string(i), out);
    } else {
      plain.collect(prefix + ".plain", out);
    }
  }
};

template <typename T, typename Rng>
ScaleBlock<T> make_scale_block(Rng& rng, const NetworkConfig& cfg, int channels) {
  ScaleBlock<T> b;
  b.use_fsm = cfg.use_fsm;
  if (cfg.use_fsm) {
    for (int i = 0; i < cfg.fsm_per_scale; ++i) b.fsms.push_back(make_fsm<T>(rng, channels));
  } else {
    b.plain = make_conv<T>(rng, channels, channels, 3, 1, 1);
  }
  return b;
}

// sigmoid(theta)*a + (1-sigmoid(theta))*b, with a learnable scalar theta.
template <typename T>
Tensor<T> adaptive_mix(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b,
                       const Tensor<T>& theta) {
  Tensor<T> s = sigmoid(tape, theta);
  Tensor<T> one_minus = shift(tape, scale(tape, s, T(-1)), T(1));
  return add(tape, mul_bscalar(tape, a, s), mul_bscalar(tape, b, one_minus));
}

template <typename T>
class Network {
 public:
  NetworkConfig cfg;

  ConvLayer<T> shallow;                 // in -> C
  std::array<ScaleBlock<T>, 3> enc;     // C, 2C, 4C
  Downsample<T> down0, down1;           // C -> 2C, 2C -> 4C
  std::vector<Rcab<T>> bottleneck;      // 4C
  std::array<ScaleBlock<T>, 3> dec;     // indexed by scale level: dec[2] quarter .. dec[0] full
  Upsample<T> up2, up1;                 // 4C -> 2C, 2C -> C
  Tensor<T> theta, gamma;               // CSFFM mix parameters
  ConvLayer<T> cs_q, cs_h;              // 1x1 channel reducers after concat+up
  ConvLayer<T> out_conv;                // C -> in

  // Runs the main network. Fills encoder and decoder taps; out_* taps stay
  // empty until encode_output.
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& blurry, ScaleTaps<T>& taps) const {
    check_input(blurry);
    taps = ScaleTaps<T>{};

    Tensor<T> e0, e1, e2;
    encode(tape, blurry, e0, e1, e2, taps.en_lf, taps.en_hf);

    Tensor<T> b = e2;
    for (const auto& r : bottleneck) b = r(tape, b);

    Tensor<T> d2 = dec[2](tape, b, nullptr, &taps.de_hf[2]);
    Tensor<T> de_h_plain = up2(tape, d2);

    Tensor<T> fused_h, fused_f;
    if (cfg.use_csffm)
      std::tie(fused_h, fused_f) = csffm(tape, e2, d2, e1, de_h_plain);

    Tensor<T> d1_in = fused_h ? add(tape, de_h_plain, fused_h) : de_h_plain;
    Tensor<T> d1 = dec[1](tape, d1_in, nullptr, &taps.de_hf[1]);
    Tensor<T> de_f_plain = up1(tape, d1);

    Tensor<T> d0_in = fused_f ? add(tape, de_f_plain, fused_f) : de_f_plain;
    Tensor<T> d0 = dec[0](tape, d0_in, nullptr, &taps.de_hf[0]);

    return add(tape, blurry, out_conv(tape, d0));
  }

  // Reuses the encoder weights over the output sharp image, filling the
  // out_lf/out_hf taps. Gradients flow into `sharp` through this pass.
  void encode_output(Tape<T>* tape, const Tensor<T>& sharp, ScaleTaps<T>& taps) const {
    if (!taps.forward_done())
      throw ContractError("encode_output: forward has not populated the encoder taps");
    Tensor<T> e0, e1, e2;
    encode(tape, sharp, e0, e1, e2, taps.out_lf, taps.out_hf);
    for (int k = 0; k < 3; ++k) {
      if (taps.out_lf[k]->shape != taps.en_lf[k]->shape ||
          taps.out_hf[k]->shape != taps.en_hf[k]->shape)
        throw ContractError("encode_output: tap shapes disagree with the encoder pass at scale " +
                            std::to_string(k));
    }
  }

  // Cross-scale feature fusion (one call per forward):
  //   fused_half = cs_q(up([mix(en_q, de_q; theta), en_q]))
  //   fused_full = cs_h(up([mix(en_h, de_h; gamma), en_h]))
  // where up is nearest x2 and cs_* are 1x1 channel-reducing convs.
  std::pair<Tensor<T>, Tensor<T>> csffm(Tape<T>* tape, const Tensor<T>& en_q,
                                        const Tensor<T>& de_q, const Tensor<T>& en_h,
                                        const Tensor<T>& de_h) const {
    if (en_q->shape != de_q->shape)
      throw ShapeError("csffm: quarter-scale features differ, " + en_q->shape.str() + " vs " +
                       de_q->shape.str());
    if (en_h->shape != de_h->shape)
      throw ShapeError("csffm: half-scale features differ, " + en_h->shape.str() + " vs " +
                       de_h->shape.str());
    Tensor<T> mix_q = adaptive_mix(tape, en_q, de_q, theta);
    Tensor<T> fused_h =
        cs_q(tape, resample2(tape, concat_channels(tape, mix_q, en_q), Resample::up_nearest));
    Tensor<T> mix_h = adaptive_mix(tape, en_h, de_h, gamma);
    Tensor<T> fused_f =
        cs_h(tape, resample2(tape, concat_channels(tape, mix_h, en_h), Resample::up_nearest));
    return {fused_h, fused_f};
  }

  ParamList<T> params() {
    ParamList<T> out;
    shallow.collect("shallow", out);
    for (int k = 0; k < 3; ++k) enc[k].collect("enc" + std::to_string(k), out);
    down0.collect("down0", out);
    down1.collect("down1", out);
    for (std::size_t i = 0; i < bottleneck.size(); ++i)
      bottleneck[i].collect("bottleneck" + std::to_string(i), out);
    for (int k = 0; k < 3; ++k) dec[k].collect("dec" + std::to_string(k), out);
    up2.collect("up2", out);
    up1.collect("up1", out);
    if (cfg.use_csffm) {
      out.emplace_back("csffm.theta", theta);
      out.emplace_back("csffm.gamma", gamma);
      cs_q.collect("csffm.q", out);
      cs_h.collect("csffm.h", out);
    }
    out_conv.collect("out", out);
    return out;
  }

 private:
  void check_input(const Tensor<T>& img) const {
    if (img->shape.c != cfg.in_channels)
      throw ShapeError("forward: expected " + std::to_string(cfg.in_channels) +
                       " input channels, got " + img->shape.str());
    if (img->shape.h % 4 != 0 || img->shape.w % 4 != 0)
      throw ShapeError("forward: spatial extents must be divisible by 4, got " +
                       img->shape.str());
  }

  void encode(Tape<T>* tape, const Tensor<T>& img, Tensor<T>& e0, Tensor<T>& e1, Tensor<T>& e2,
              std::array<Tensor<T>, 3>& lf, std::array<Tensor<T>, 3>& hf) const {
    Tensor<T> x0 = shallow(tape, img);
    e0 = enc[0](tape, x0, &lf[0], &hf[0]);
    e1 = enc[1](tape, down0(tape, e0), &lf[1], &hf[1]);
    e2 = enc[2](tape, down1(tape, e1), &lf[2], &hf[2]);
  }
};

template <typename T>
Network<T> make_network(const NetworkConfig& cfg, unsigned seed) {
  cfg.validate();
  std::mt19937 rng(seed);
  const int C = cfg.base_channels;
  const T slope = static_cast<T>(cfg.leaky_slope);

  Network<T> net;
  net.cfg = cfg;
  net.shallow = make_conv<T>(rng, cfg.in_channels, C, 3, 1, 1);
  net.enc[0] = make_scale_block<T>(rng, cfg, C);
  net.enc[1] = make_scale_block<T>(rng, cfg, 2 * C);
  net.enc[2] = make_scale_block<T>(rng, cfg, 4 * C);
  net.down0 = make_downsample<T>(rng, C, 2 * C, slope);
  net.down1 = make_downsample<T>(rng, 2 * C, 4 * C, slope);
  for (int i = 0; i < cfg.rcab_count; ++i)
    net.bottleneck.push_back(make_rcab<T>(rng, 4 * C, cfg.attention_ratio, slope));
  net.dec[2] = make_scale_block<T>(rng, cfg, 4 * C);
  net.dec[1] = make_scale_block<T>(rng, cfg, 2 * C);
  net.dec[0] = make_scale_block<T>(rng, cfg, C);
  net.up2 = make_upsample<T>(rng, 4 * C, cfg.attention_ratio, slope);
  net.up1 = make_upsample<T>(rng, 2 * C, cfg.attention_ratio, slope);
  net.theta = make_tensor<T>({1, 1, 1, 1}, true);
  net.gamma = make_tensor<T>({1, 1, 1, 1}, true);
  net.cs_q = make_conv<T>(rng, 8 * C, 2 * C, 1, 1, 0);
  net.cs_h = make_conv<T>(rng, 4 * C, C, 1, 1, 0);
  net.out_conv = make_conv<T>(rng, C, cfg.in_channels, 3, 1, 1);
  return net;
}

}  // namespace msfs
