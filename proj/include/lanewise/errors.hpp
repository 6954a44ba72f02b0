#pragma once

#include <stdexcept>
#include <string>

namespace lanewise {

// Invalid numeric input to a model, sampler or fit.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SampleSizeError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Bad simulator or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file the run depends on does not exist.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Table persistence and integrity failures. Each load failure mode has its
// own type so callers can tell them apart.
class TableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public TableError {
 public:
  using TableError::TableError;
};

class ShapeError : public TableError {
 public:
  using TableError::TableError;
};

class VersionError : public TableError {
 public:
  using TableError::TableError;
};

class ChecksumError : public TableError {
 public:
  using TableError::TableError;
};

class TruncatedError : public TableError {
 public:
  using TableError::TableError;
};

}  // namespace lanewise
