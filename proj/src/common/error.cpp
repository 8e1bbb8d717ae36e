#include "microforge/error.hpp"

namespace microforge {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::NotFound: return "NotFound";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::PatchTooLarge: return "PatchTooLarge";
    case Errc::OddDimension: return "OddDimension";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonIntegralOutput: return "NonIntegralOutput";
    case Errc::BadOverlap: return "BadOverlap";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::ResolutionNotInSchedule: return "ResolutionNotInSchedule";
    case Errc::ResolutionMismatch: return "ResolutionMismatch";
    case Errc::VariantDisabled: return "VariantDisabled";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::BadTarget: return "BadTarget";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::EvenKernel: return "EvenKernel";
    case Errc::DegenerateImage: return "DegenerateImage";
    case Errc::EmptySet: return "EmptySet";
    case Errc::MetricMismatch: return "MetricMismatch";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::NotConverged: return "NotConverged";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace microforge
