#include "veinpatch/error.hpp"

namespace veinpatch {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParameter: return "invalid-parameter";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kState: return "state";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kInsufficientEdgeEvidence: return "insufficient-edge-evidence";
    case ErrorCode::kDegenerateFit: return "degenerate-fit";
    case ErrorCode::kImplausibleGeometry: return "implausible-geometry";
    case ErrorCode::kDegenerateLabel: return "degenerate-label";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kUndefinedPrecision: return "undefined-precision";
    case ErrorCode::kInsufficientMinutiae: return "insufficient-minutiae";
    case ErrorCode::kInvalidBatch: return "invalid-batch";
    case ErrorCode::kInvalidCorpus: return "invalid-corpus";
    case ErrorCode::kDegeneratePatch: return "degenerate-patch";
    case ErrorCode::kManifest: return "manifest";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

StageError::StageError(std::string stage, std::string path, const Error& cause)
    : Error(cause.code(), "stage " + stage + ": " + path + ": " + cause.what()),
      stage_(std::move(stage)),
      path_(std::move(path)) {}

}  // namespace veinpatch
