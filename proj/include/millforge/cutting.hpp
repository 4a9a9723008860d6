#pragma once

#include "millforge/tool.hpp"
#include "millforge/types.hpp"

#include <functional>
#include <vector>

namespace millforge {

/// Mechanistic constants in (tangential, radial, axial) order.
struct MaterialParams {
  Vec3 kc = Vec3::Zero();  // N/mm^2, cutting (chip-area) coefficients
  Vec3 ke = Vec3::Zero();  // N/mm, edge coefficients

  /// Rejects negative tangential/radial cutting coefficients unless
  /// `allow_signed` is set. Axial terms may take either sign.
  void validate(bool allow_signed = false) const;
};

/// Feed of the tool through the material at one instant.
struct FeedState {
  Vec3 velocity_world = Vec3::Zero();  // mm/s
  Mat3 world_to_model = Mat3::Identity();
  double spindle_angle = 0.0;          // rad
};

/// Boolean engagement matrix G (n_flutes x n_discs), row-major.
class EngagementMatrix {
 public:
  EngagementMatrix() = default;
  EngagementMatrix(int n_flutes, int n_discs, bool value = false)
      : rows_(n_flutes), cols_(n_discs),
        cells_(static_cast<std::size_t>(n_flutes * n_discs), value ? 1 : 0) {}

  int n_flutes() const { return rows_; }
  int n_discs() const { return cols_; }
  bool operator()(int f, int d) const { return cells_[f * cols_ + d] != 0; }
  void set(int f, int d, bool v) { cells_[f * cols_ + d] = v ? 1 : 0; }
  void fill(bool v) { std::fill(cells_.begin(), cells_.end(), v ? 1 : 0); }
  void resize(int n_flutes, int n_discs) {
    rows_ = n_flutes;
    cols_ = n_discs;
    cells_.assign(static_cast<std::size_t>(n_flutes * n_discs), 0);
  }
  int count() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<char> cells_;
};

struct CuttingOptions {
  // Chip thickness uses the model-to-flute rotation (transpose of the element
  // frame). Clearing this selects the opposite reading of the rotation.
  bool chip_uses_model_to_flute = true;
  // When false, edge forces act only on elements with a positive raw chip.
  bool edge_force_when_engaged = false;
};

struct ChipThickness {
  double clamped = 0.0;  // max(raw, 0), what the force model sees
  double raw = 0.0;
};

struct ForceResult {
  Vec3 force_model = Vec3::Zero();  // N, frame M
  Vec3 force_world = Vec3::Zero();  // N, frame W
  int engaged_count = 0;
  double mrv_rate = 0.0;            // mm^3/s, uncut-chip removal rate
};

/// Feed per tooth in the model frame (mm): R_WM v / (N_f omega).
Vec3 feed_per_tooth(const FeedState& feed, const ToolGeometry& tool);

/// Undeformed chip thickness of an element at angle `theta` (mm).
ChipThickness chip_thickness(const Vec3& feed_per_tooth_model, double theta,
                             const CuttingOptions& opts = {});

/// Force on one element in its own frame: b*Ke + b*Kc*h.
Vec3 flute_force(const MaterialParams& material, double edge_length_mm, double chip_mm);

/// Cutting speed at the rim (mm/s); multiplies b*h to give a removal rate.
inline double rim_speed(const ToolGeometry& tool) {
  return kTwoPi * tool.radius() * tool.spindle_speed();
}

/// Sum of element forces over the engaged set.
ForceResult total_force(const ToolGeometry& tool, const MaterialParams& material,
                        const FeedState& feed, const EngagementMatrix& engagement,
                        const CuttingOptions& opts = {});

/// Engagement at a given spindle angle; must be safe to call concurrently.
using EngagementQuery = std::function<EngagementMatrix(double spindle_angle)>;

struct AverageForce {
  Vec3 force_model = Vec3::Zero();
  Vec3 force_world = Vec3::Zero();
  double mrv_rate = 0.0;
};

/// Mean of total_force over `n_samples` spindle angles uniformly spaced on
/// [0, 2pi) starting at feed.spindle_angle, re-querying engagement each time.
AverageForce revolution_average_force(const ToolGeometry& tool,
                                      const MaterialParams& material,
                                      const FeedState& feed,
                                      const EngagementQuery& engagement,
                                      int n_samples, const CuttingOptions& opts = {},
                                      Exec exec = Exec::parallel);

/// Analytic immersion for a flat surface `rdoc_mm` above the tool tip: an
/// element is engaged when its rim point lies strictly below the surface.
EngagementMatrix immersion_engagement(const ToolGeometry& tool, double spindle_angle,
                                      double rdoc_mm);

}  // namespace millforge
