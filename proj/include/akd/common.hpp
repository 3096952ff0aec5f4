#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace akd {

using Shape = std::vector<int64_t>;

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid hyperparameter (e.g. non-positive temperature).
struct ParamError : Error {
  using Error::Error;
};

/// Malformed input data (labels out of range, non-normalized rows).
struct DataError : Error {
  using Error::Error;
};

/// Architecture descriptor failed to parse.
struct DescriptorError : Error {
  using Error::Error;
};

/// Binary file format violation; message carries the byte offset.
struct FormatError : Error {
  using Error::Error;
};

/// Operation invoked in an invalid state (missing gradient, stale checkpoint).
struct StateError : Error {
  using Error::Error;
};

/// Inconsistent run configuration (method vs. teacher count, group count).
struct ConfigError : Error {
  using Error::Error;
};

/// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

/// Synthetic data generation could not satisfy its constraints.
struct GenError : Error {
  using Error::Error;
};

inline int64_t shape_numel(const Shape& dims) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

inline bool all_finite(const double* v, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

}  // namespace akd
