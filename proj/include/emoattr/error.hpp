#pragma once

#include <stdexcept>
#include <string>

namespace emoattr {

// Shape or axis mismatch between tensors, or against an operation's contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value (hyperparameter, rate, kernel geometry).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data value outside its documented range (e.g. unnormalized coordinates).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or Inf produced where finite values are guaranteed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument to an operation (empty dataset, out-of-range subset size, ...).
class ArgumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Batch-norm training mode fed a batch too small for statistics.
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training run failed (divergence, propagated numerical failure).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A class has too few samples to appear in every split.
class StratificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An emotion required by an operation has no sample, model, or baseline.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failure, malformed file, or unsupported format version.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace emoattr
