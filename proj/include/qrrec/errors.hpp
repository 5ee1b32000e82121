#pragma once

#include <stdexcept>
#include <string>

namespace qrrec {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition (e.g. backward from a non-scalar).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint and dataset disagree (item/user counts, format versions).
struct CompatibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qrrec
