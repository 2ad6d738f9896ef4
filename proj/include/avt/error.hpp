#pragma once

#include <stdexcept>
#include <string>

namespace avt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

// log of a non-positive value, out-of-range epoch, and similar.
struct DomainError : Error {
  using Error::Error;
};

// Collinear corners, singular DLT system, point at infinity.
struct DegeneracyError : Error {
  using Error::Error;
};

struct NonFiniteError : Error {
  using Error::Error;
};

struct IngestError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace avt
