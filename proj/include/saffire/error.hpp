#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saffire {

enum class ErrorCode {
  UnsupportedFamily,
  EmptyFeatureSet,
  FamilyMismatch,
  DegenerateFeature,
  InsufficientTrainData,
  UntrainableImage,
  EmptyPath,
  NoViablePath,
  AllFamiliesFailed,
  EmptyModel,
  RoiOutsideImage,
  LengthMismatch,
  FormatVersionMismatch,
  CorruptModel,
  SpecError,
  EmptyInput,
  ModelManifestFamilyMismatch,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Raised by build_graph when a training image yields no graph node.
class UntrainableImageError : public Error {
public:
  UntrainableImageError(std::size_t image_index, const std::string &message)
      : Error(ErrorCode::UntrainableImage, message), image_index_(image_index) {}

  std::size_t image_index() const noexcept { return image_index_; }

private:
  std::size_t image_index_;
};

} // namespace saffire
