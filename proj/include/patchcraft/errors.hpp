#pragma once

#include <stdexcept>
#include <string>

namespace patchcraft {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API precondition (non-scalar loss, misaligned optimizer state).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Hyperparameters that cannot describe a valid model or run.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data handed to a model or classifier does not match what it was built for.
class InputError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Malformed text input (CSV, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace patchcraft
