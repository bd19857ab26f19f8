#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msfs {

// Shape or channel-count violation in an operation's inputs.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: calling an operation outside its valid state.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file on disk (checkpoint, image).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset-level problem: unpaired files, undecodable or invalid images.
struct IngestError : std::runtime_error {
  explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value where the pipeline cannot continue (NaN loss/gradient).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace msfs
