#include "millforge/tool.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace millforge {

ToolGeometry::ToolGeometry(const ToolSpec& spec)
    : ToolGeometry(spec, std::vector<double>(
                             static_cast<std::size_t>(std::max(spec.n_flutes, 0) *
                                                      std::max(spec.n_discs, 0)),
                             spec.edge_length_mm)) {}

ToolGeometry::ToolGeometry(const ToolSpec& spec, std::vector<double> edge_lengths_mm)
    : edge_(std::move(edge_lengths_mm)) {
  build(spec);
}

void ToolGeometry::build(const ToolSpec& spec) {
  if (!(spec.radius_mm > 0.0)) throw InvalidArgument("tool radius must be positive");
  if (spec.n_flutes < 1) throw InvalidArgument("tool needs at least one flute");
  if (spec.n_discs < 1) throw InvalidArgument("tool needs at least one disc");
  if (spec.disc_stack_sign != 1 && spec.disc_stack_sign != -1)
    throw InvalidArgument("disc_stack_sign must be +1 or -1");
  if (!std::isfinite(spec.pitch_rad) || !std::isfinite(spec.helix_rad))
    throw InvalidArgument("tool angles must be finite");
  if (edge_.size() != static_cast<std::size_t>(spec.n_flutes * spec.n_discs))
    throw DimensionMismatch("edge length table must have n_flutes * n_discs entries");
  for (double b : edge_)
    if (!(b > 0.0)) throw InvalidArgument("edge lengths must be positive");
  if (spec.enforce_uniform_pitch &&
      std::abs(spec.pitch_rad * spec.n_flutes - kTwoPi) > 1e-9)
    throw InvalidArgument("uniform pitch requires pitch * n_flutes == 2pi");

  radius_ = spec.radius_mm;
  pitch_ = spec.pitch_rad;
  helix_ = spec.helix_rad;
  n_flutes_ = spec.n_flutes;
  n_discs_ = spec.n_discs;
  omega_ = spec.spindle_rpm / 60.0;
  disc_stack_sign_ = spec.disc_stack_sign;

  offset_.resize(edge_.size());
  axial_.resize(edge_.size());
  const double tan_helix = std::tan(helix_);
  for (int f = 0; f < n_flutes_; ++f) {
    double stacked = 0.0;
    for (int d = 0; d < n_discs_; ++d) {
      const int i = index(f, d);
      const double b = edge_[i];
      offset_[i] = f * pitch_ - (d + 0.5) * tan_helix * b / radius_;
      axial_[i] = disc_stack_sign_ * (stacked + 0.5 * b);
      stacked += b;
    }
  }
}

double ToolGeometry::axial_length() const {
  double total = 0.0;
  for (int d = 0; d < n_discs_; ++d) total += edge_[index(0, d)];
  return total;
}

double element_angle(const ToolGeometry& tool, double spindle_angle, int f, int d) {
  if (f < 0 || f >= tool.n_flutes() || d < 0 || d >= tool.n_discs())
    throw OutOfBounds("element index out of range");
  return wrap_two_pi(spindle_angle + tool.angle_offset(f, d));
}

ElementFrame element_frame(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  ElementFrame frame;
  frame.theta = theta;
  frame.rotation_f_to_m << -c, -s, 0.0,
                            s, -c, 0.0,
                            0.0, 0.0, 1.0;
  return frame;
}

Vec3 element_position(const ToolGeometry& tool, double theta, int f, int d) {
  const double r = tool.radius();
  return {r * std::sin(theta), r * std::cos(theta), tool.axial_position(f, d)};
}

}  // namespace millforge
