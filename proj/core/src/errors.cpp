#include "interconnect/errors.hpp"

namespace interconnect {

const char* to_string(CheckpointError::Kind kind) noexcept {
  switch (kind) {
    case CheckpointError::Kind::Io: return "io";
    case CheckpointError::Kind::Manifest: return "manifest";
    case CheckpointError::Kind::Version: return "version";
    case CheckpointError::Kind::Truncated: return "truncated";
    case CheckpointError::Kind::ShapeMismatch: return "shape_mismatch";
    case CheckpointError::Kind::MissingTensor: return "missing_tensor";
  }
  return "unknown";
}

}  // namespace interconnect
