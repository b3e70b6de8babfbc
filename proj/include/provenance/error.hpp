#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace provenance {

enum class ErrorCode {
  NotAnElf,
  NoExecutableSection,
  DisassemblerUnavailable,
  UnsupportedMachine,
  EmptyListing,
  EmptyStream,
  EmptyCorpus,
  LayoutMismatch,
  DimensionMismatch,
  SingleClassInput,
  ClassTooSmall,
  InsufficientLabels,
  ModelSchemaMismatch,
  IsaMismatch,
  IoFailure,
  MalformedManifest,
  UnknownLabel,
  InvalidArgument,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotAnElf: return "NotAnElf";
    case ErrorCode::NoExecutableSection: return "NoExecutableSection";
    case ErrorCode::DisassemblerUnavailable: return "DisassemblerUnavailable";
    case ErrorCode::UnsupportedMachine: return "UnsupportedMachine";
    case ErrorCode::EmptyListing: return "EmptyListing";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::InsufficientLabels: return "InsufficientLabels";
    case ErrorCode::ModelSchemaMismatch: return "ModelSchemaMismatch";
    case ErrorCode::IsaMismatch: return "IsaMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
/// what() is "<CodeName>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace provenance
