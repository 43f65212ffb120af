#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kernelsurf {

enum class ErrorCode {
  IoError,
  ParseError,
  EmptyInput,
  InvalidConfig,
  TooFewPoints,
  DimensionMismatch,
  SizeMismatch,
  FormatError,
  EmptyReference,
  EmptyMesh,
  InvalidFit,
  AllChunksFailed,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::InvalidFit: return "InvalidFit";
    case ErrorCode::AllChunksFailed: return "AllChunksFailed";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kernelsurf
