#include "dsqn/error.hpp"

namespace dsqn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyVector: return "EmptyVector";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TraceMismatch: return "TraceMismatch";
    case ErrorCode::NotEnoughSamples: return "NotEnoughSamples";
    case ErrorCode::OutputSpiked: return "OutputSpiked";
    case ErrorCode::AlreadyQuantized: return "AlreadyQuantized";
    case ErrorCode::FloatModelNotSweepable: return "FloatModelNotSweepable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dsqn
