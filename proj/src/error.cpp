#include "saffire/error.hpp"

namespace saffire {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::UnsupportedFamily:
    return "UnsupportedFamily";
  case ErrorCode::EmptyFeatureSet:
    return "EmptyFeatureSet";
  case ErrorCode::FamilyMismatch:
    return "FamilyMismatch";
  case ErrorCode::DegenerateFeature:
    return "DegenerateFeature";
  case ErrorCode::InsufficientTrainData:
    return "InsufficientTrainData";
  case ErrorCode::UntrainableImage:
    return "UntrainableImage";
  case ErrorCode::EmptyPath:
    return "EmptyPath";
  case ErrorCode::NoViablePath:
    return "NoViablePath";
  case ErrorCode::AllFamiliesFailed:
    return "AllFamiliesFailed";
  case ErrorCode::EmptyModel:
    return "EmptyModel";
  case ErrorCode::RoiOutsideImage:
    return "RoiOutsideImage";
  case ErrorCode::LengthMismatch:
    return "LengthMismatch";
  case ErrorCode::FormatVersionMismatch:
    return "FormatVersionMismatch";
  case ErrorCode::CorruptModel:
    return "CorruptModel";
  case ErrorCode::SpecError:
    return "SpecError";
  case ErrorCode::EmptyInput:
    return "EmptyInput";
  case ErrorCode::ModelManifestFamilyMismatch:
    return "ModelManifestFamilyMismatch";
  case ErrorCode::InvalidArgument:
    return "InvalidArgument";
  case ErrorCode::IoError:
    return "IoError";
  }
  return "Unknown";
}

} // namespace saffire
