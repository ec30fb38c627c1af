#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fatigue {

enum class ErrorCode {
  // signal-io
  MissingChannel,
  NonNumericSample,
  BadHeader,
  EmptyFile,
  BadLabelFile,
  // dsp
  InvalidBandEdges,
  InvalidTapCount,
  SignalTooShort,
  EmptyBand,
  TooShort,
  // topomap
  BadMontageFile,
  NonFiniteValue,
  WrongInputSize,
  UnfittedNormalizer,
  // cnn
  ShapeMismatch,
  TooSmall,
  NoCachedForward,
  EmptyTrainingSet,
  MixedCombinations,
  BadCheckpoint,
  // classifiers
  SingleClass,
  SingularSystem,
  MissingClass,
  KTooLarge,
  ClassTooSmall,
  EmptyData,
  BadModelFile,
  // eval
  KExceedsN,
  LengthMismatch,
  BadLabel,
  BadCubeArchive,
  // cli / config
  ConfigError,
  IoError,
  InvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fatigue
