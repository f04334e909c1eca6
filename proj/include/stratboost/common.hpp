#pragma once

#include <stdexcept>
#include <string>

namespace stratboost {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown: overflow, degenerate curvature, divergence.
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace stratboost
