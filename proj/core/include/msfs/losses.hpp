#pragma once

// The three training losses: multi-scale L1 consistency on LF features,
// multi-scale contrastive loss on HF features (decoder tap as anchor,
// output-image tap as positive, encoder tap as negative), and the L1
// reconstruction term that ties them together.

#include "msfs/network.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

struct LossWeights {
  double lambda1 = 0.05;        // contrastive (HF) weight
  double lambda2 = 0.05;        // consistency (LF) weight
  double eps_contrastive = 1e-7;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw ContractError("LossWeights: lambdas must be >= 0");
    if (eps_contrastive <= 0) throw ContractError("LossWeights: eps_contrastive must be > 0");
  }
};

// Sum over scales of mean |en_lf - out_lf|.
template <typename T>
Tensor<T> loss_low(Tape<T>* tape, const ScaleTaps<T>& taps) {
  if (!taps.forward_done() || !taps.output_done())
    throw ContractError("loss_low: taps not fully populated");
  Tensor<T> acc;
  for (int k = 0; k < 3; ++k) {
    Tensor<T> term = l1_mean(tape, taps.en_lf[k], taps.out_lf[k]);
    acc = acc ? add(tape, acc, term) : term;
  }
  return acc;
}

// Sum over scales of L1(anchor, positive) / (L1(anchor, negative) + eps).
template <typename T>
Tensor<T> loss_high(Tape<T>* tape, const ScaleTaps<T>& taps, const LossWeights& w,
                    bool detach_negatives = false) {
  w.validate();
  if (!taps.forward_done() || !taps.output_done())
    throw ContractError("loss_high: taps not fully populated");
  Tensor<T> acc;
  for (int k = 0; k < 3; ++k) {
    Tensor<T> anchor = taps.de_hf[k];
    Tensor<T> positive = taps.out_hf[k];
    Tensor<T> negative = detach_negatives ? detach(taps.en_hf[k]) : taps.en_hf[k];
    Tensor<T> num = l1_mean(tape, anchor, positive);
    Tensor<T> den = shift(tape, l1_mean(tape, anchor, negative),
                          static_cast<T>(w.eps_contrastive));
    Tensor<T> term = div(tape, num, den);
    acc = acc ? add(tape, acc, term) : term;
  }
  return acc;
}

template <typename T>
struct LossBreakdown {
  Tensor<T> total, high, low, recon;
};

// lambda1 * L_high + lambda2 * L_low + L1(sharp, gt). Terms with zero
// weight are skipped entirely (and their taps are not required).
template <typename T>
LossBreakdown<T> loss_total(Tape<T>* tape, const Tensor<T>& sharp, const Tensor<T>& gt,
                            const ScaleTaps<T>& taps, const LossWeights& w,
                            bool detach_negatives = false) {
  w.validate();
  LossBreakdown<T> out;
  out.recon = l1_mean(tape, sharp, gt);
  out.total = out.recon;
  if (w.lambda1 > 0) {
    out.high = loss_high(tape, taps, w, detach_negatives);
    out.total = add(tape, out.total, scale(tape, out.high, static_cast<T>(w.lambda1)));
  } else {
    out.high = scalar_tensor<T>(T(0));
  }
  if (w.lambda2 > 0) {
    out.low = loss_low(tape, taps);
    out.total = add(tape, out.total, scale(tape, out.low, static_cast<T>(w.lambda2)));
  } else {
    out.low = scalar_tensor<T>(T(0));
  }
  return out;
}

}  // namespace msfs
