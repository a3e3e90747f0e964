#pragma once

#include <stdexcept>
#include <string>

namespace hiccap {

enum class ErrorKind {
  MissingFile,
  SchemaMismatch,
  DimMismatch,
  InvariantViolation,
  EvenAnnotatorCount,
  NoLabels,
  WrongModality,
  EmptySequence,
  ShapeMismatch,
  NonFiniteLogit,
  ZeroVector,
  EmptyPartition,
  NonFiniteLoss,
  AllMasked,
  EmptyMask,
  LengthMismatch,
  NoPositivesAnywhere,
  NoPositives,
  DegenerateMarginals,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Exit code contract of the CLI: input/validation problems map to 2, the rest to 1.
inline bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile:
    case ErrorKind::SchemaMismatch:
    case ErrorKind::DimMismatch:
    case ErrorKind::InvariantViolation:
    case ErrorKind::EvenAnnotatorCount:
    case ErrorKind::NoLabels:
    case ErrorKind::EmptyMask:
    case ErrorKind::AllMasked:
    case ErrorKind::InvalidConfig:
    case ErrorKind::EmptyPartition:
      return true;
    default:
      return false;
  }
}

}  // namespace hiccap
