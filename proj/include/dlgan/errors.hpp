#pragma once

#include <stdexcept>
#include <string>

namespace dlgan {

enum class ErrorKind {
  FileNotFound,
  NoNumericColumns,
  EmptyAfterCleaning,
  FeatureCountMismatch,
  SeriesTooShort,
  ShapeMismatch,
  NonFiniteActivation,
  IndivisibleLength,
  HeadDivisibility,
  BadWindow,
  MissingTarget,
  UnexpectedTarget,
  NonFiniteLogit,
  DivergenceDetected,
  UntrainedCheckpoint,
  VersionMismatch,
  CorruptFile,
  InsufficientData,
  ConfigInvalid,
  Io,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::NoNumericColumns: return "NoNumericColumns";
    case ErrorKind::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorKind::FeatureCountMismatch: return "FeatureCountMismatch";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::IndivisibleLength: return "IndivisibleLength";
    case ErrorKind::HeadDivisibility: return "HeadDivisibility";
    case ErrorKind::BadWindow: return "BadWindow";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::UnexpectedTarget: return "UnexpectedTarget";
    case ErrorKind::NonFiniteLogit: return "NonFiniteLogit";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::UntrainedCheckpoint: return "UntrainedCheckpoint";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dlgan
