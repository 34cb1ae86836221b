#pragma once

#include <stdexcept>
#include <string>

namespace skinrf {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed skeleton tree, mismatched part counts, bad mesh indices.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Blended skinning matrix too ill-conditioned to invert.
class DegenerateDeformationError : public Error {
 public:
  using Error::Error;
};

// A latent code row that does not exist in the parameter store.
class MissingLatentError : public Error {
 public:
  using Error::Error;
};

// Non-finite value appeared during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Scene / config / checkpoint parse failures. Message carries the JSON path.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A requested allocation exceeds a configured cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. running backward twice on one tape).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace skinrf
