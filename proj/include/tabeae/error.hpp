#pragma once

#include <stdexcept>
#include <string>

namespace tabeae {

// Base error for everything thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (corpus records, registry entries, config files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Shape or dimension mismatch between tensors, masks or checkpoints.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage. Mapped to exit code 2 by the CLI.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabeae
