#pragma once

// AdamW with decoupled weight decay, plus the stepped learning-rate
// schedule (halving every fixed number of epochs).

#include <cmath>
#include <vector>

#include "msfs/layers.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.9;  // as configured for this network; 0.999 is the usual default
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw ContractError("AdamConfig: betas must lie in (0,1)");
    if (eps <= 0) throw ContractError("AdamConfig: eps must be positive");
    if (weight_decay < 0) throw ContractError("AdamConfig: weight decay must be >= 0");
  }
};

template <typename T>
class AdamW {
 public:
  struct State {
    std::vector<T> m, v;
  };

  AdamW() = default;
  AdamW(const ParamList<T>& params, AdamConfig cfg) : cfg_(cfg) { reset(params); }

  void reset(const ParamList<T>& params) {
    cfg_.validate();
    states_.clear();
    for (const auto& [name, p] : params)
      states_.push_back(State{std::vector<T>(p->data.size(), T(0)),
                              std::vector<T>(p->data.size(), T(0))});
    step_count_ = 0;
  }

  // One bias-corrected update over every parameter with a populated grad.
  // Parameters whose grad buffer is empty this step are skipped (their
  // moments do not advance). Throws NumericalError on non-finite gradients.
  void step(const ParamList<T>& params, double lr) {
    if (params.size() != states_.size())
      throw ContractError("AdamW::step: parameter list does not match optimizer state");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      const auto& [name, p] = params[pi];
      if (p->grad.empty()) continue;
      State& st = states_[pi];
      for (std::size_t i = 0; i < p->data.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        if (!std::isfinite(g))
          throw NumericalError("AdamW: non-finite gradient in parameter " + name);
        st.m[i] = static_cast<T>(cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g);
        st.v[i] = static_cast<T>(cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g);
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        double upd = lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        upd += lr * cfg_.weight_decay * static_cast<double>(p->data[i]);
        p->data[i] = static_cast<T>(p->data[i] - upd);
      }
    }
  }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t s) { step_count_ = s; }
  std::vector<State>& states() { return states_; }
  const std::vector<State>& states() const { return states_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<State> states_;
  std::uint64_t step_count_ = 0;
};

// lr0 * 0.5^floor(epoch / halve_every)
inline double lr_at(int epoch, double lr0, int halve_every) {
  if (epoch < 0) throw ContractError("lr_at: epoch must be >= 0");
  if (halve_every <= 0) return lr0;
  return lr0 * std::pow(0.5, static_cast<double>(epoch / halve_every));
}

}  // namespace msfs
