#include "millforge/cutting.hpp"

#include <algorithm>
#include <cmath>

namespace millforge {

void MaterialParams::validate(bool allow_signed) const {
  if (!kc.allFinite() || !ke.allFinite())
    throw InvalidArgument("material constants must be finite");
  if (!allow_signed && (kc[0] < 0.0 || kc[1] < 0.0))
    throw InvalidArgument("tangential and radial cutting coefficients must be >= 0");
}

int EngagementMatrix::count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), char{1}));
}

Vec3 feed_per_tooth(const FeedState& feed, const ToolGeometry& tool) {
  const double omega = tool.spindle_speed();
  if (!(omega > 0.0)) throw ZeroSpindleSpeed("spindle speed must be positive");
  return (feed.world_to_model * feed.velocity_world) / (tool.n_flutes() * omega);
}

ChipThickness chip_thickness(const Vec3& f, double theta, const CuttingOptions& opts) {
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  // [0 -1 0] * R^T f picks minus the second column of R; [0 -1 0] * R f picks
  // minus its second row.
  const double raw = opts.chip_uses_model_to_flute ? f.x() * s + f.y() * c
                                                   : -f.x() * s + f.y() * c;
  return {std::max(raw, 0.0), raw};
}

Vec3 flute_force(const MaterialParams& material, double b, double h) {
  return b * material.ke + (b * h) * material.kc;
}

ForceResult total_force(const ToolGeometry& tool, const MaterialParams& material,
                        const FeedState& feed, const EngagementMatrix& engagement,
                        const CuttingOptions& opts) {
  if (engagement.n_flutes() != tool.n_flutes() || engagement.n_discs() != tool.n_discs())
    throw DimensionMismatch("engagement matrix does not match tool discretisation");

  const Vec3 fpt = feed_per_tooth(feed, tool);
  const double v_rim = rim_speed(tool);
  ForceResult out;
  for (int f = 0; f < tool.n_flutes(); ++f) {
    for (int d = 0; d < tool.n_discs(); ++d) {
      if (!engagement(f, d)) continue;
      ++out.engaged_count;
      const double theta = wrap_two_pi(feed.spindle_angle + tool.angle_offset(f, d));
      const ChipThickness h = chip_thickness(fpt, theta, opts);
      if (!(h.raw > 0.0) && !opts.edge_force_when_engaged) continue;
      const double b = tool.edge_length(f, d);
      const Vec3 local = flute_force(material, b, h.clamped);
      // R_F^M * local with R columns (-c, s, 0), (-s, -c, 0), (0, 0, 1).
      const double s = std::sin(theta);
      const double c = std::cos(theta);
      out.force_model.x() += -c * local.x() - s * local.y();
      out.force_model.y() += s * local.x() - c * local.y();
      out.force_model.z() += local.z();
      out.mrv_rate += b * h.clamped * v_rim;
    }
  }
  out.force_world = feed.world_to_model.transpose() * out.force_model;
  return out;
}

AverageForce revolution_average_force(const ToolGeometry& tool,
                                      const MaterialParams& material,
                                      const FeedState& feed,
                                      const EngagementQuery& engagement, int n_samples,
                                      const CuttingOptions& opts, Exec exec) {
  if (n_samples < tool.n_flutes())
    throw InvalidArgument("revolution average needs at least n_flutes samples");

  std::vector<ForceResult> samples(static_cast<std::size_t>(n_samples));
  auto eval = [&](int k) {
    FeedState at = feed;
    at.spindle_angle = feed.spindle_angle + kTwoPi * k / n_samples;
    samples[k] = total_force(tool, material, at, engagement(at.spindle_angle), opts);
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < n_samples; ++k) eval(k);
  } else {
    for (int k = 0; k < n_samples; ++k) eval(k);
  }

  // Ordered reduction so both schedules give bit-identical sums.
  AverageForce avg;
  for (const auto& s : samples) {
    avg.force_model += s.force_model;
    avg.force_world += s.force_world;
    avg.mrv_rate += s.mrv_rate;
  }
  avg.force_model /= n_samples;
  avg.force_world /= n_samples;
  avg.mrv_rate /= n_samples;
  return avg;
}

EngagementMatrix immersion_engagement(const ToolGeometry& tool, double spindle_angle,
                                      double rdoc_mm) {
  EngagementMatrix g(tool.n_flutes(), tool.n_discs());
  const double r = tool.radius();
  const double surface = -r + rdoc_mm;
  for (int f = 0; f < tool.n_flutes(); ++f)
    for (int d = 0; d < tool.n_discs(); ++d) {
      const double theta = wrap_two_pi(spindle_angle + tool.angle_offset(f, d));
      g.set(f, d, r * std::cos(theta) < surface);
    }
  return g;
}

}  // namespace millforge
