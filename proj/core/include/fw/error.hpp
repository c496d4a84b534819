#pragma once

#include <stdexcept>
#include <string>

namespace fw {

// Base class for every error thrown by this library. Catching fw::Error at a
// CLI boundary is enough to turn any library failure into a clean exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or ranks are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An index (element offset, class label, argmax target) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (wrong tape, non-scalar backward
// root, bad hyperparameter value, mismatched memory dimensions).
class ContractError : public Error {
 public:
  using Error::Error;
};

// The two-phase episode protocol was broken: prediction before the
// description phase, or a second description without an intervening reset.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Config text could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An episode could not be sampled (too few classes or examples).
class SamplingError : public Error {
 public:
  using Error::Error;
};

// A dataset on disk is malformed (bad layout, unreadable image, wrong count).
class IngestError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A checkpoint or serialized dataset failed its integrity checks.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Filesystem / IO failure outside of parse errors.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fw
