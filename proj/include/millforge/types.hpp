#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace millforge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce an angle to [0, 2pi).
inline double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map them to exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MILLFORGE_DEFINE_ERROR(Name) \
  struct Name : Error {              \
    using Error::Error;              \
  }

MILLFORGE_DEFINE_ERROR(InvalidArgument);
MILLFORGE_DEFINE_ERROR(DimensionMismatch);
MILLFORGE_DEFINE_ERROR(ZeroSpindleSpeed);
MILLFORGE_DEFINE_ERROR(OutOfBounds);
MILLFORGE_DEFINE_ERROR(DegeneratePath);
MILLFORGE_DEFINE_ERROR(NonSPDGains);
MILLFORGE_DEFINE_ERROR(EpisodeFinished);
MILLFORGE_DEFINE_ERROR(InsufficientBaseline);
MILLFORGE_DEFINE_ERROR(RankDeficient);
MILLFORGE_DEFINE_ERROR(NoConvergence);
MILLFORGE_DEFINE_ERROR(SingularCovariance);
MILLFORGE_DEFINE_ERROR(ConfigError);

#undef MILLFORGE_DEFINE_ERROR

/// Selects the serial reference path or the OpenMP kernel for functions that
/// provide both. Results are identical; only the schedule differs.
enum class Exec { serial, parallel };

}  // namespace millforge
