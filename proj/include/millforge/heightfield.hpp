#pragma once

#include "millforge/cutting.hpp"
#include "millforge/tool.hpp"
#include "millforge/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace millforge {

enum class SurfaceFamily { flat, sinusoidal, perlin, fractal };

std::string to_string(SurfaceFamily family);
SurfaceFamily surface_family_from_string(const std::string& name);

struct SurfaceSpec {
  SurfaceFamily family = SurfaceFamily::flat;
  double base_height_mm = 0.0;
  double amplitude_mm = 2.0;
  // sinusoidal: wavelength along `direction_rad` in the x-y plane
  double wavelength_mm = 40.0;
  double direction_rad = 0.0;
  double phase_rad = 0.0;
  // perlin / fractal: lattice spacing of the first octave
  double feature_size_mm = 40.0;
  int octaves = 4;
  double lacunarity = 2.0;
  double persistence = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GridSpec {
  int nx = 256;
  int ny = 256;
  double dx = 1.0;  // mm
  double dy = 1.0;  // mm
  double origin_x = 0.0;
  double origin_y = 0.0;

  void validate() const;
};

/// Placement of the tool model frame M in the world.
struct ToolPose {
  Vec3 origin = Vec3::Zero();                 // mm
  Mat3 model_to_world = Mat3::Identity();
};

/// Workpiece top surface sampled on a regular grid. Each node stands for a
/// dx*dy cell when integrating volume. Between nodes the surface is the
/// cubic-convolution (Catmull-Rom) bicubic interpolant, which passes through
/// the nodes and reproduces linear fields exactly.
class Heightfield {
 public:
  Heightfield() = default;
  Heightfield(const GridSpec& grid, std::vector<double> heights);

  const GridSpec& grid() const { return grid_; }
  int nx() const { return grid_.nx; }
  int ny() const { return grid_.ny; }
  double dx() const { return grid_.dx; }
  double dy() const { return grid_.dy; }
  double x_at(int i) const { return grid_.origin_x + i * grid_.dx; }
  double y_at(int j) const { return grid_.origin_y + j * grid_.dy; }
  double x_max() const { return x_at(grid_.nx - 1); }
  double y_max() const { return y_at(grid_.ny - 1); }

  double node(int i, int j) const { return h_[idx(i, j)]; }
  const std::vector<double>& heights() const { return h_; }

  bool contains(double x, double y) const;
  /// Interpolated height; throws OutOfBounds outside the grid.
  double height(double x, double y) const;
  /// Upper bound on every node height (heights never rise).
  double max_height() const { return max_height_; }

  /// Σ h * dx * dy over all nodes (mm^3).
  double volume() const;
  double removed_volume_total() const { return removed_total_; }
  void reset_accounting() { removed_total_ = 0.0; }

  /// Elements whose world position lies strictly below the surface.
  /// Positions outside the grid count as not engaged.
  EngagementMatrix engagement(const ToolGeometry& tool, const ToolPose& pose,
                              double spindle_angle) const;

  /// Lower every node with y in [y_lo, y_hi] to the underside of a disc of
  /// `radius` swept in the x-z plane from centre c0 to c1. Returns the
  /// removed volume (mm^3) and adds it to removed_volume_total().
  double remove_swept_disc(const Vec3& c0, const Vec3& c1, double radius, double y_lo,
                           double y_hi);

  /// Material removal for the saw mount (tool axis along world y). `tip0`,
  /// `tip1` are the lowest blade point at the start and end of the motion.
  double remove_material(const ToolGeometry& tool, const Vec3& tip0, const Vec3& tip1);

  std::uint64_t hash() const;

 private:
  int idx(int i, int j) const { return j * grid_.nx + i; }
  double node_ext(int i, int j) const;

  GridSpec grid_;
  std::vector<double> h_;
  double max_height_ = 0.0;
  double min_height_ = 0.0;
  double removed_total_ = 0.0;
};

Heightfield generate(const SurfaceSpec& spec, const GridSpec& grid,
                     Exec exec = Exec::parallel);

/// Lowest z of a disc of radius r swept from c0 to c1 (x-z plane) at
/// abscissa x, or +inf if the swept shape does not cover x.
double swept_disc_floor(const Vec3& c0, const Vec3& c1, double r, double x);

}  // namespace millforge
