#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace veinpatch {

enum class ErrorCode {
  kInvalidParameter,
  kShape,
  kState,
  kNonFinite,
  kInsufficientEdgeEvidence,
  kDegenerateFit,
  kImplausibleGeometry,
  kDegenerateLabel,
  kTrainingDiverged,
  kInvalidInput,
  kUndefinedPrecision,
  kInsufficientMinutiae,
  kInvalidBatch,
  kInvalidCorpus,
  kDegeneratePatch,
  kManifest,
  kFormat,
  kIo,
};

/// Stable identifier used in machine-parseable CLI error lines.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Error raised inside run_pipeline, tagged with the failing stage.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string path, const Error& cause);

  const std::string& stage() const noexcept { return stage_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string stage_;
  std::string path_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace veinpatch
