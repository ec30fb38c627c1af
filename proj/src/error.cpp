#include "fatigue/error.hpp"

namespace fatigue {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::NonNumericSample: return "NonNumericSample";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::BadLabelFile: return "BadLabelFile";
    case ErrorCode::InvalidBandEdges: return "InvalidBandEdges";
    case ErrorCode::InvalidTapCount: return "InvalidTapCount";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadMontageFile: return "BadMontageFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::WrongInputSize: return "WrongInputSize";
    case ErrorCode::UnfittedNormalizer: return "UnfittedNormalizer";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::NoCachedForward: return "NoCachedForward";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::MixedCombinations: return "MixedCombinations";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::BadModelFile: return "BadModelFile";
    case ErrorCode::KExceedsN: return "KExceedsN";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::BadCubeArchive: return "BadCubeArchive";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace fatigue
