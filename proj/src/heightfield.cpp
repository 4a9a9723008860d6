#include "millforge/heightfield.hpp"

#include "millforge/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace millforge {

std::string to_string(SurfaceFamily family) {
  switch (family) {
    case SurfaceFamily::flat: return "flat";
    case SurfaceFamily::sinusoidal: return "sinusoidal";
    case SurfaceFamily::perlin: return "perlin";
    case SurfaceFamily::fractal: return "fractal";
  }
  return "flat";
}

SurfaceFamily surface_family_from_string(const std::string& name) {
  if (name == "flat") return SurfaceFamily::flat;
  if (name == "sinusoidal") return SurfaceFamily::sinusoidal;
  if (name == "perlin") return SurfaceFamily::perlin;
  if (name == "fractal") return SurfaceFamily::fractal;
  throw InvalidArgument("unknown surface family '" + name + "'");
}

void SurfaceSpec::validate() const {
  if (!(amplitude_mm >= 0.0)) throw InvalidArgument("surface amplitude must be >= 0");
  if (octaves < 1) throw InvalidArgument("octaves must be >= 1");
  if (!(wavelength_mm > 0.0)) throw InvalidArgument("wavelength must be positive");
  if (!(feature_size_mm > 0.0)) throw InvalidArgument("feature size must be positive");
  if (!(lacunarity > 0.0) || !(persistence > 0.0))
    throw InvalidArgument("lacunarity and persistence must be positive");
  if (!std::isfinite(base_height_mm)) throw InvalidArgument("base height must be finite");
}

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw InvalidArgument("grid needs at least 2x2 nodes");
  if (!(dx > 0.0) || !(dy > 0.0)) throw InvalidArgument("grid spacing must be positive");
}

Heightfield::Heightfield(const GridSpec& grid, std::vector<double> heights)
    : grid_(grid), h_(std::move(heights)) {
  grid_.validate();
  if (h_.size() != static_cast<std::size_t>(grid_.nx) * grid_.ny)
    throw DimensionMismatch("height array must have nx*ny entries");
  for (double v : h_)
    if (!std::isfinite(v)) throw InvalidArgument("heights must be finite");
  const auto [lo, hi] = std::minmax_element(h_.begin(), h_.end());
  min_height_ = *lo;
  max_height_ = *hi;
}

bool Heightfield::contains(double x, double y) const {
  return x >= grid_.origin_x && x <= x_max() && y >= grid_.origin_y && y <= y_max();
}

double Heightfield::node_ext(int i, int j) const {
  const int nx = grid_.nx;
  const int ny = grid_.ny;
  // Ghost nodes continue the boundary slope linearly.
  auto row = [&](int jj) {
    if (i < 0) return node(0, jj) + i * (node(1, jj) - node(0, jj));
    if (i >= nx) return node(nx - 1, jj) + (i - nx + 1) * (node(nx - 1, jj) - node(nx - 2, jj));
    return node(i, jj);
  };
  if (j < 0) return row(0) + j * (row(1) - row(0));
  if (j >= ny) return row(ny - 1) + (j - ny + 1) * (row(ny - 1) - row(ny - 2));
  return row(j);
}

namespace {

void catmull_rom(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

// Cell index and local coordinate, with the last cell absorbing the far edge.
void locate(double u, int n, int& cell, double& t) {
  cell = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
  t = u - cell;
}

}  // namespace

double Heightfield::height(double x, double y) const {
  if (!contains(x, y)) throw OutOfBounds("surface query outside the heightfield");
  int i, j;
  double tx, ty;
  locate((x - grid_.origin_x) / grid_.dx, grid_.nx, i, tx);
  locate((y - grid_.origin_y) / grid_.dy, grid_.ny, j, ty);
  // Exact node values at nodes, no rounding from the weight sums.
  if (tx == 0.0 && ty == 0.0) return node(i, j);
  double wx[4], wy[4];
  catmull_rom(tx, wx);
  catmull_rom(ty, wy);
  double sum = 0.0;
  for (int b = 0; b < 4; ++b) {
    double row = 0.0;
    for (int a = 0; a < 4; ++a) row += wx[a] * node_ext(i - 1 + a, j - 1 + b);
    sum += wy[b] * row;
  }
  return sum;
}

double Heightfield::volume() const {
  double sum = 0.0;
  for (double v : h_) sum += v;
  return sum * grid_.dx * grid_.dy;
}

EngagementMatrix Heightfield::engagement(const ToolGeometry& tool, const ToolPose& pose,
                                         double spindle_angle) const {
  EngagementMatrix g(tool.n_flutes(), tool.n_discs());
  // Interpolant overshoot and ghost-node extrapolation stay within a few
  // multiples of the height range, so anything above this is clear.
  const double ceiling = max_height_ + 3.0 * (max_height_ - min_height_) + 1e-9;
  for (int f = 0; f < tool.n_flutes(); ++f) {
    for (int d = 0; d < tool.n_discs(); ++d) {
      const double theta = wrap_two_pi(spindle_angle + tool.angle_offset(f, d));
      const Vec3 p = pose.origin + pose.model_to_world * element_position(tool, theta, f, d);
      if (p.z() >= ceiling || !contains(p.x(), p.y())) continue;
      g.set(f, d, p.z() < height(p.x(), p.y()));
    }
  }
  return g;
}

double swept_disc_floor(const Vec3& c0, const Vec3& c1, double r, double x) {
  double z = std::numeric_limits<double>::infinity();
  for (const Vec3* c : {&c0, &c1}) {
    const double u = x - c->x();
    if (std::abs(u) <= r) z = std::min(z, c->z() - std::sqrt(r * r - u * u));
  }
  const double ddx = c1.x() - c0.x();
  const double ddz = c1.z() - c0.z();
  const double len = std::hypot(ddx, ddz);
  if (len > 0.0 && ddx != 0.0) {
    // Downward unit normal of the segment; the offset line is the capsule's
    // lower flank.
    double nx = ddz / len;
    double nz = -ddx / len;
    if (nz > 0.0) {
      nx = -nx;
      nz = -nz;
    }
    const double s = (x - c0.x() - r * nx) / ddx;
    if (s >= 0.0 && s <= 1.0) z = std::min(z, c0.z() + s * ddz + r * nz);
  }
  return z;
}

double Heightfield::remove_swept_disc(const Vec3& c0, const Vec3& c1, double radius,
                                      double y_lo, double y_hi) {
  const double gx = grid_.origin_x;
  const double gy = grid_.origin_y;
  const int j0 = std::max(0, static_cast<int>(std::ceil((y_lo - gy) / grid_.dy - 1e-9)));
  const int j1 =
      std::min(grid_.ny - 1, static_cast<int>(std::floor((y_hi - gy) / grid_.dy + 1e-9)));
  const double xa = std::min(c0.x(), c1.x()) - radius;
  const double xb = std::max(c0.x(), c1.x()) + radius;
  const int i0 = std::max(0, static_cast<int>(std::ceil((xa - gx) / grid_.dx)));
  const int i1 = std::min(grid_.nx - 1, static_cast<int>(std::floor((xb - gx) / grid_.dx)));
  if (j0 > j1 || i0 > i1) return 0.0;
  if (std::min(c0.z(), c1.z()) - radius >= max_height_) return 0.0;

  double removed = 0.0;
  for (int i = i0; i <= i1; ++i) {
    const double floor_z = swept_disc_floor(c0, c1, radius, x_at(i));
    if (!std::isfinite(floor_z)) continue;
    for (int j = j0; j <= j1; ++j) {
      double& h = h_[idx(i, j)];
      if (h > floor_z) {
        removed += h - floor_z;
        h = floor_z;
      }
    }
    min_height_ = std::min(min_height_, floor_z);
  }
  const double vol = removed * grid_.dx * grid_.dy;
  removed_total_ += vol;
  return vol;
}

double Heightfield::remove_material(const ToolGeometry& tool, const Vec3& tip0,
                                    const Vec3& tip1) {
  const double r = tool.radius();
  const double width = tool.axial_length();
  const Vec3 c0 = saw_mount::model_origin(tip0, r);
  const Vec3 c1 = saw_mount::model_origin(tip1, r);
  const double ya = std::min(tip0.y(), tip1.y());
  const double yb = std::max(tip0.y(), tip1.y());
  // Model +z maps to world -y, so a positive stack lies on the -y side.
  if (tool.disc_stack_sign() > 0) return remove_swept_disc(c0, c1, r, ya - width, yb);
  return remove_swept_disc(c0, c1, r, ya, yb + width);
}

std::uint64_t Heightfield::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : h_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

Heightfield generate(const SurfaceSpec& spec, const GridSpec& grid, Exec exec) {
  spec.validate();
  grid.validate();
  const PerlinNoise noise(spec.seed);
  std::vector<double> h(static_cast<std::size_t>(grid.nx) * grid.ny, spec.base_height_mm);
  const double c = std::cos(spec.direction_rad);
  const double s = std::sin(spec.direction_rad);

  auto fill_row = [&](int j) {
    const double y = grid.origin_y + j * grid.dy;
    for (int i = 0; i < grid.nx; ++i) {
      const double x = grid.origin_x + i * grid.dx;
      double v = 0.0;
      switch (spec.family) {
        case SurfaceFamily::flat: break;
        case SurfaceFamily::sinusoidal:
          v = std::sin(kTwoPi * (x * c + y * s) / spec.wavelength_mm + spec.phase_rad);
          break;
        case SurfaceFamily::perlin:
          v = noise(x / spec.feature_size_mm, y / spec.feature_size_mm);
          break;
        case SurfaceFamily::fractal:
          v = fractal_noise(noise, x / spec.feature_size_mm, y / spec.feature_size_mm,
                            spec.octaves, spec.lacunarity, spec.persistence);
          break;
      }
      h[static_cast<std::size_t>(j) * grid.nx + i] += spec.amplitude_mm * v;
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < grid.ny; ++j) fill_row(j);
  } else {
    for (int j = 0; j < grid.ny; ++j) fill_row(j);
  }
  return Heightfield(grid, std::move(h));
}

}  // namespace millforge
