#pragma once

#include <stdexcept>
#include <string>

namespace mpa {

// Base class for all errors raised by the library. CLI maps these to exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input-data problems: bad schema, unparsable cells, broken invariants.
struct ValidationError : Error {
  using Error::Error;
};

struct SchemaError : ValidationError {
  using ValidationError::ValidationError;
};

struct ParseError : ValidationError {
  using ValidationError::ValidationError;
};

// Timestamp grid is not contiguous hourly.
struct AlignmentError : ValidationError {
  using ValidationError::ValidationError;
};

// A referenced entity (unit, company) does not exist.
struct ReferenceError : ValidationError {
  using ValidationError::ValidationError;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

// Mismatched array shapes between panels that must align.
struct ShapeError : Error {
  using Error::Error;
};

// A fit or segmentation cannot be performed on the data given.
struct InfeasibleError : Error {
  using Error::Error;
};

// Estimation diagnostic: the likelihood has no finite maximizer
// (single-class outcome or perfect separation).
struct SeparationError : Error {
  using Error::Error;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

}  // namespace mpa
