#pragma once

#include <stdexcept>
#include <string>

namespace lipens {

/// Shape or dimension mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated or inconsistent serialized data.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf or other numerical breakdown detected mid-computation.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace lipens
