#pragma once

#include <stdexcept>
#include <string>

namespace cmzsl {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File cannot be opened, read or written.
struct IoError : Error {
  using Error::Error;
};

/// File exists but does not conform to the expected layout (bad magic,
/// bad version, truncated payload, unparseable CSV).
struct FormatError : Error {
  using Error::Error;
};

/// File parses but carries invalid content (non-finite value, label out
/// of range, inconsistent dimensions).
struct DataError : Error {
  using Error::Error;
};

/// Vector/matrix dimensions do not match.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid argument at an API boundary (empty candidate set, label >= C,
/// batch larger than the train split, ...).
struct ArgumentError : Error {
  using Error::Error;
};

/// A non-finite value appeared in a numeric computation.
struct NumericsError : Error {
  using Error::Error;
};

/// Split construction violates disjointness or label-consistency rules.
struct SplitError : Error {
  using Error::Error;
};

/// A prototype was requested for a class with no text samples.
struct EmptyClassError : Error {
  using Error::Error;
};

/// Input outside a metric's domain (zero vector under cosine distance).
struct DegenerateInputError : Error {
  using Error::Error;
};

}  // namespace cmzsl
