#pragma once

#include <stdexcept>
#include <string>

namespace pamo {

enum class ErrorKind {
  NonPositiveDepth,
  DegenerateConfiguration,
  InvalidSpec,
  UnknownPart,
  MissingMotion,
  InconsistentInput,
  Unobservable,
  MissingHistory,
  DimensionMismatch,
  LengthMismatch,
  EmptyMask,
  MissingGroundTruth,
  Validation,
  Io,
};

inline const char* to_string(ErrorKind kind);

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnknownPart: return "UnknownPart";
    case ErrorKind::MissingMotion: return "MissingMotion";
    case ErrorKind::InconsistentInput: return "InconsistentInput";
    case ErrorKind::Unobservable: return "Unobservable";
    case ErrorKind::MissingHistory: return "MissingHistory";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pamo
