#pragma once

#include <stdexcept>
#include <string>

namespace evp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input-side failures. The CLI maps these to exit code 1.
class InputError : public Error {
 public:
  using Error::Error;
};

class IngestError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};

// Runtime failures. The CLI maps these to exit code 2.
class RuntimeError : public Error {
 public:
  using Error::Error;
};

class SplitError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class ShapeError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class LookupError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class SamplingError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class TrainingError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class ContractError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class TaskError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class PrototypeError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class MetricError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

}  // namespace evp
