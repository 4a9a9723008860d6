#pragma once

#include "millforge/types.hpp"

#include <vector>

namespace millforge {

/// Parameters a tool is built from. Spindle speed is accepted in rpm here and
/// converted to revolutions per second exactly once, in ToolGeometry's
/// constructor.
struct ToolSpec {
  double radius_mm = 25.0;
  double pitch_rad = 0.1257;
  double helix_rad = 0.0;
  int n_flutes = 50;
  int n_discs = 1;
  double edge_length_mm = 0.5;
  double spindle_rpm = 1000.0;
  // pitch * n_flutes == 2pi when set. The default saw pitch is rounded
  // (0.1257 * 50 != 2pi), hence off by default.
  bool enforce_uniform_pitch = false;
  // +1 stacks discs from the lower axial face along +z of the model frame.
  int disc_stack_sign = 1;
};

/// Rotation from a flute/disc element frame to the model frame M.
struct ElementFrame {
  double theta = 0.0;
  Mat3 rotation_f_to_m = Mat3::Identity();
};

/// Discretised rotary cutter: n_flutes x n_discs cutting elements.
/// Immutable after construction.
class ToolGeometry {
 public:
  explicit ToolGeometry(const ToolSpec& spec = {});
  // Per-element edge lengths, row-major [flute][disc].
  ToolGeometry(const ToolSpec& spec, std::vector<double> edge_lengths_mm);

  double radius() const { return radius_; }
  double pitch() const { return pitch_; }
  double helix() const { return helix_; }
  int n_flutes() const { return n_flutes_; }
  int n_discs() const { return n_discs_; }
  int n_elements() const { return n_flutes_ * n_discs_; }
  /// Spindle speed in revolutions per second.
  double spindle_speed() const { return omega_; }
  int disc_stack_sign() const { return disc_stack_sign_; }

  double edge_length(int f, int d) const { return edge_[index(f, d)]; }
  /// Total edge length along the tool axis (kerf width) of flute 0.
  double axial_length() const;

  /// Constant part of the element angle: f*pitch - (d + 1/2) tan(helix) b / R.
  double angle_offset(int f, int d) const { return offset_[index(f, d)]; }
  /// Axial coordinate of the disc mid-height in the model frame (mm).
  double axial_position(int f, int d) const { return axial_[index(f, d)]; }

  int index(int f, int d) const { return f * n_discs_ + d; }

 private:
  void build(const ToolSpec& spec);

  double radius_;
  double pitch_;
  double helix_;
  int n_flutes_;
  int n_discs_;
  double omega_;
  int disc_stack_sign_;
  std::vector<double> edge_;
  std::vector<double> offset_;
  std::vector<double> axial_;
};

/// Angle of element (f, d) for spindle angle `spindle_angle`, in [0, 2pi).
double element_angle(const ToolGeometry& tool, double spindle_angle, int f, int d);

/// Element-to-model rotation; columns (-cos, sin, 0), (-sin, -cos, 0), (0, 0, 1).
ElementFrame element_frame(double theta);

/// Element location in the model frame (mm): on the rim, at disc mid-height.
Vec3 element_position(const ToolGeometry& tool, double theta, int f, int d);

/// Fixed slitting-saw mounting used by the simulator: the blade plane is the
/// world x-z plane and the tool axis points along -y of the world frame.
/// The plant tracks the lowest point of the blade (the tool tip); the model
/// frame origin sits one radius above it.
namespace saw_mount {

/// Rotation taking model-frame vectors to the world frame.
inline Mat3 model_to_world() {
  Mat3 r;
  r << 1.0, 0.0, 0.0,
       0.0, 0.0, -1.0,
       0.0, 1.0, 0.0;
  return r;
}

inline Mat3 world_to_model() { return model_to_world().transpose(); }

inline Vec3 model_origin(const Vec3& tip_mm, double radius_mm) {
  return tip_mm + Vec3(0.0, 0.0, radius_mm);
}

}  // namespace saw_mount

}  // namespace millforge
