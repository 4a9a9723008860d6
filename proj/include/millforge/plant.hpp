#pragma once

#include "millforge/cutting.hpp"
#include "millforge/heightfield.hpp"
#include "millforge/osc.hpp"
#include "millforge/tool.hpp"
#include "millforge/types.hpp"

#include <string>
#include <vector>

namespace millforge {

struct PlantParams {
  // Pose-dependent inertia Λ(x) = Λ_c (1 + a sin(2π (x + y + z) / λ)).
  double inertia_variation = 0.1;
  double inertia_wavelength_mm = 50.0;
  // Spindle angles sampled per physics step when averaging the cutting force.
  int spindle_substeps = 4;
  Vec3 workspace_min_mm = Vec3::Constant(-1e9);
  Vec3 workspace_max_mm = Vec3::Constant(1e9);
  CuttingOptions cutting;

  void validate() const;
};

enum class SafetyStatus { ok, workspace_violation, non_finite_state };
std::string to_string(SafetyStatus s);

/// Tool tip state. Error coordinates e = x - x_d are the integrated state; the
/// reference is tracked with ideal feedforward so x = x_d + e.
struct PlantState {
  Vec3 x = Vec3::Zero();       // mm, lowest blade point
  Vec3 x_dot = Vec3::Zero();   // mm/s
  Vec3 x_ddot = Vec3::Zero();  // mm/s^2, error acceleration of the last step
  Vec3 e = Vec3::Zero();       // mm
  Vec3 e_dot = Vec3::Zero();   // mm/s
  double spindle_angle0 = 0.0;
  long long step_index = 0;
  double time = 0.0;           // s

  /// Θ(t) = Θ(0) + 2π ω t, accumulated from the step count.
  double spindle_angle(double omega_rev_s, double dt) const;
};

struct PlantStepResult {
  Vec3 f_ext = Vec3::Zero();        // N, world, mean over spindle sub-angles
  double mrv_volume = 0.0;          // mm^3, chip-load volume over the step
  double removed_volume = 0.0;      // mm^3, heightfield delta of the step
  double engaged_mean = 0.0;
  EnergyTankOsc::Result control;
  // SI error coordinates before/after, for the energy audit.
  Vec3 e0_si = Vec3::Zero();
  Vec3 e1_si = Vec3::Zero();
  Vec3 e_dot0_si = Vec3::Zero();
  Vec3 e_dot1_si = Vec3::Zero();
  SafetyStatus safety = SafetyStatus::ok;
};

/// Operational-space point mass under energy-tank OSC, cutting a heightfield.
class MillingPlant {
 public:
  MillingPlant(ToolGeometry tool, MaterialParams material, ControllerConfig controller,
               PlantParams params);

  /// Place the tool at x_d + e with zero error velocity; clears any material
  /// overlapping the blade and zeroes the removal accounting.
  void reset(Heightfield* workpiece, const Vec3& x_d, const Vec3& x_d_dot,
             const Vec3& e0 = Vec3::Zero(), double spindle_angle0 = 0.0);

  /// Advance one physics step. `x_d0` must be the setpoint the previous step
  /// ended on; `x_d1` is the setpoint at the end of this step.
  PlantStepResult step(const Vec3& x_d0, const Vec3& x_d1, const Vec3& k_p_diag, double dt);

  const PlantState& state() const { return state_; }
  const EnergyTankOsc& controller() const { return osc_; }
  const ToolGeometry& tool() const { return tool_; }
  const MaterialParams& material() const { return material_; }
  const PlantParams& params() const { return params_; }

  Mat3 lambda_v_at(const Vec3& x_mm) const;

 private:
  ToolGeometry tool_;
  MaterialParams material_;
  PlantParams params_;
  EnergyTankOsc osc_;
  Heightfield* workpiece_ = nullptr;
  PlantState state_;
};

/// Per-step energy record for the passivity audit (SI units).
struct EnergyRecord {
  Vec3 e0, e1, e_dot0, e_dot1, f_ext;
  double tank0 = 0.0;
  double tank1 = 0.0;
};

struct PassivityReport {
  bool passed = true;
  double max_violation_J = 0.0;      // worst sub-interval excess beyond tolerance
  double max_step_excess_J = 0.0;    // largest single-step ΔW - F_e^T Δe
  long long worst_begin = -1;
  long long worst_end = -1;
  bool tank_bounds_ok = true;
  std::size_t steps = 0;
};

/// Checks W(t1) - W(t0) <= Σ F_e^T Δe + tol * (steps) on every sub-interval,
/// with W = ½ėᵀΛ_cė + ½eᵀΛ_cK_ce (+ H_t when `include_tank`).
PassivityReport passivity_audit(const std::vector<EnergyRecord>& log, const Mat3& lambda_c,
                                const Mat3& k_c, bool include_tank,
                                double tol_per_step_J = 1e-6,
                                const TankConfig* tank_bounds = nullptr);

}  // namespace millforge
