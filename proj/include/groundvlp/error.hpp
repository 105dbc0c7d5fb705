#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace groundvlp {

enum class Errc {
  kMissingFile,
  kShapeMismatch,
  kInvariantViolation,
  kUnsupportedVersion,
  kIoFailure,
  kSchema,
  kEmptySelection,
  kBadRegionCount,
  kLayoutMismatch,
  kEmptyInput,
  kEmptyTree,
  kParse,
  kEmptyVocabulary,
  kNoProposalsAtAll,
  kEmptyCandidates,
  kEmptyRecords,
  kInvalidRecord,
  kUnknownExpression,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kMissingFile: return "MissingFile";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kInvariantViolation: return "InvariantViolation";
    case Errc::kUnsupportedVersion: return "UnsupportedVersion";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kSchema: return "SchemaError";
    case Errc::kEmptySelection: return "EmptySelection";
    case Errc::kBadRegionCount: return "BadRegionCount";
    case Errc::kLayoutMismatch: return "LayoutMismatch";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kEmptyTree: return "EmptyTree";
    case Errc::kParse: return "ParseError";
    case Errc::kEmptyVocabulary: return "EmptyVocabulary";
    case Errc::kNoProposalsAtAll: return "NoProposalsAtAll";
    case Errc::kEmptyCandidates: return "EmptyCandidates";
    case Errc::kEmptyRecords: return "EmptyRecords";
    case Errc::kInvalidRecord: return "InvalidRecord";
    case Errc::kUnknownExpression: return "UnknownExpression";
  }
  return "Unknown";
}

/// Every failure raised by the library. `field()` names the offending input
/// (a file, a manifest key, a record) when one is known.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string field, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " +
                           (field.empty() ? message : field + ": " + message)),
        code_(code),
        field_(std::move(field)) {}

  Errc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Errc code_;
  std::string field_;
};

}  // namespace groundvlp
