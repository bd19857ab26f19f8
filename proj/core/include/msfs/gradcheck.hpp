#pragma once

// Central finite-difference verification of analytic gradients.
// The graph builder is re-run from the current leaf values for every
// perturbation, so it must be a pure function of the leaves.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "msfs/tensor.hpp"

namespace msfs {

struct LeafReport {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t elements = 0;
};

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::vector<LeafReport> leaves;

  bool pass(double tol) const { return std::isfinite(max_rel_err) && max_rel_err < tol; }
};

// Sensible step sizes for central differences near O(1) values.
template <typename T>
constexpr T default_fd_eps() {
  return sizeof(T) == 4 ? T(3e-3) : T(1e-5);
}

template <typename T>
GradReport grad_check(const std::function<Tensor<T>(Tape<T>*)>& build,
                      const std::vector<std::pair<std::string, Tensor<T>>>& leaves,
                      T eps = default_fd_eps<T>()) {
  GradReport report;

  // Analytic pass.
  for (auto& [name, leaf] : leaves) leaf->zero_grad();
  Tape<T> tape;
  Tensor<T> loss = build(&tape);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& [name, leaf] : leaves) {
    if (leaf->requires_grad)
      leaf->ensure_grad();
    analytic.push_back(leaf->grad);
  }

  auto eval = [&]() -> double {
    Tensor<T> out = build(nullptr);
    return static_cast<double>(out->data[0]);
  };

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto& [name, leaf] = leaves[li];
    if (!leaf->requires_grad) continue;  // frozen leaves are excluded
    LeafReport lr;
    lr.name = name;
    lr.elements = leaf->data.size();
    for (std::size_t i = 0; i < leaf->data.size(); ++i) {
      const T saved = leaf->data[i];
      leaf->data[i] = saved + eps;
      const double fp = eval();
      leaf->data[i] = saved - eps;
      const double fm = eval();
      leaf->data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[li][i]);
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      lr.max_rel_err = std::max(lr.max_rel_err, rel);
      ++report.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, lr.max_rel_err);
    report.leaves.push_back(std::move(lr));
  }
  return report;
}

}  // namespace msfs
