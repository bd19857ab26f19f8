#pragma once

// Binary checkpoint format: magic "MSFS", version, named parameter tensors
// (shape + raw 32-bit little-endian floats), optional optimizer moments and
// step count, epoch, and a flat key=value config snapshot. Round-trips are
// bit-exact.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msfs/layers.hpp"
#include "msfs/tensor.hpp"

namespace msfs {

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ParamList<float> params;
  bool has_optimizer = false;
  std::vector<std::vector<float>> opt_m, opt_v;  // aligned with params
  std::uint64_t opt_step = 0;
  std::uint32_t epoch = 0;
  std::string config_text;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws FormatError on bad magic, unsupported version, or truncation.
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing parameter list by name;
// throws ContractError on any name or shape mismatch.
void restore_params(const Checkpoint& ckpt, const ParamList<float>& params);

}  // namespace msfs
