#pragma once

#include "millforge/types.hpp"

#include <vector>

namespace millforge {

class Heightfield;

/// Rational B-spline curve in 3-D.
class NurbsCurve {
 public:
  NurbsCurve(int degree, std::vector<double> knots, std::vector<Vec3> control_points,
             std::vector<double> weights);

  /// Clamped uniform knots on [0, 1]; unit weights when `weights` is empty.
  static NurbsCurve clamped(int degree, std::vector<Vec3> control_points,
                            std::vector<double> weights = {});

  int degree() const { return p_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vec3>& control_points() const { return ctrl_; }
  const std::vector<double>& weights() const { return w_; }
  double u_min() const { return knots_[p_]; }
  double u_max() const { return knots_[knots_.size() - p_ - 1]; }

  Vec3 point(double u) const;
  /// Position and first derivative with respect to u.
  void evaluate(double u, Vec3& point, Vec3& derivative) const;

 private:
  int span(double u) const;

  int p_;
  std::vector<double> knots_;
  std::vector<Vec3> ctrl_;
  std::vector<double> w_;
};

struct PathSample {
  Vec3 position = Vec3::Zero();  // mm
  Vec3 velocity = Vec3::Zero();  // mm/s
  Vec3 normal = Vec3::UnitZ();
};

/// Cutting path c(t), t in [0, T], mapped linearly onto the curve parameter.
/// The normal is world +z projected perpendicular to the tangent, so a
/// positive normal offset lifts the tool away from the material.
class CutterPath {
 public:
  CutterPath(NurbsCurve curve, double duration_s);

  const NurbsCurve& curve() const { return curve_; }
  double duration() const { return duration_; }

  /// Throws DegeneratePath if the tangent vanishes or is vertical.
  PathSample eval(double t) const;
  Vec3 setpoint(double t, double t_delta, double n_delta) const;

 private:
  NurbsCurve curve_;
  double duration_;
};

/// Straight pass along +x at fixed y that hugs the workpiece surface: cubic
/// clamped NURBS through surface heights sampled every `spacing_mm`,
/// traversed at `speed_mm_s`.
CutterPath surface_following_path(const Heightfield& surface, double y, double x0,
                                  double x1, double speed_mm_s, double spacing_mm = 5.0);

}  // namespace millforge
