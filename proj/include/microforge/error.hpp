#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace microforge {

enum class Errc {
  NotFound,
  UnsupportedFormat,
  PatchTooLarge,
  OddDimension,
  ShapeMismatch,
  NonIntegralOutput,
  BadOverlap,
  NonScalarLoss,
  ResolutionNotInSchedule,
  ResolutionMismatch,
  VariantDisabled,
  ConfigInvalid,
  BadTarget,
  CorruptFile,
  VersionMismatch,
  EvenKernel,
  DegenerateImage,
  EmptySet,
  MetricMismatch,
  SingularSystem,
  NotConverged,
  ValidationError,
  IoError,
};

std::string_view errc_name(Errc code);

// Single exception type for the whole library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace microforge
