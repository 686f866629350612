#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace cmtra {

/// Root of every error thrown by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

// Exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

// Exit code 2: anything wrong with the input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class LabelParseError : public DataError {
 public:
  using DataError::DataError;
};

class LabelSetError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyTextError : public DataError {
 public:
  using DataError::DataError;
};

class UnlabeledSampleError : public DataError {
 public:
  using DataError::DataError;
};

class LanguageMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyCorpusError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyEvaluationError : public DataError {
 public:
  using DataError::DataError;
};

class LengthMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class IndexError : public DataError {
 public:
  using DataError::DataError;
};

/// A record-level failure annotated with its 1-based line number.
class RecordError : public DataError {
 public:
  RecordError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Exit code 3: numerical failures and kernel contract violations.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class ShapeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EmptySequenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A pipeline failure tagged with the stage it aborted; keeps the exit code
/// of the underlying error.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, int code)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept override { return code_; }

 private:
  std::string stage_;
  int code_;
};

}  // namespace cmtra
