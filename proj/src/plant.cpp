#include "millforge/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace millforge {

void PlantParams::validate() const {
  if (!(inertia_variation >= 0.0 && inertia_variation < 1.0))
    throw InvalidArgument("inertia_variation must lie in [0, 1)");
  if (!(inertia_wavelength_mm > 0.0))
    throw InvalidArgument("inertia_wavelength_mm must be positive");
  if (spindle_substeps < 1) throw InvalidArgument("spindle_substeps must be >= 1");
  if ((workspace_max_mm - workspace_min_mm).minCoeff() <= 0.0)
    throw InvalidArgument("workspace box is empty");
}

std::string to_string(SafetyStatus s) {
  switch (s) {
    case SafetyStatus::ok: return "ok";
    case SafetyStatus::workspace_violation: return "workspace_violation";
    case SafetyStatus::non_finite_state: return "non_finite_state";
  }
  return "ok";
}

double PlantState::spindle_angle(double omega_rev_s, double dt) const {
  return spindle_angle0 + kTwoPi * omega_rev_s * (static_cast<double>(step_index) * dt);
}

MillingPlant::MillingPlant(ToolGeometry tool, MaterialParams material,
                           ControllerConfig controller, PlantParams params)
    : tool_(std::move(tool)), material_(material), params_(std::move(params)),
      osc_(controller) {
  params_.validate();
  material_.validate(true);
}

Mat3 MillingPlant::lambda_v_at(const Vec3& x_mm) const {
  const double s = std::sin(kTwoPi * x_mm.sum() / params_.inertia_wavelength_mm);
  return (params_.inertia_variation * s * osc_.config().lambda_c_kg) * Mat3::Identity();
}

void MillingPlant::reset(Heightfield* workpiece, const Vec3& x_d, const Vec3& x_d_dot,
                         const Vec3& e0, double spindle_angle0) {
  workpiece_ = workpiece;
  osc_.reset();
  state_ = PlantState{};
  state_.e = e0;
  state_.x = x_d + e0;
  state_.x_dot = x_d_dot;
  state_.spindle_angle0 = spindle_angle0;
  if (workpiece_) {
    workpiece_->remove_material(tool_, state_.x, state_.x);
    workpiece_->reset_accounting();
  }
}

PlantStepResult MillingPlant::step(const Vec3& x_d0, const Vec3& x_d1, const Vec3& k_p_diag,
                                   double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("physics dt must be positive");
  PlantStepResult out;
  const Vec3 x0 = state_.x;
  const Vec3 x_d_dot = (x_d1 - x_d0) / dt;

  if (workpiece_) {
    const double omega = tool_.spindle_speed();
    const double theta0 = state_.spindle_angle(omega, dt);
    const int n_sub = params_.spindle_substeps;
    FeedState feed;
    feed.velocity_world = x_d_dot + state_.e_dot;
    feed.world_to_model = saw_mount::world_to_model();
    ToolPose pose;
    // Elements are tested at the pose the step moves toward: at x0 the front
    // arc lies exactly on the surface carved by the previous step.
    pose.origin = saw_mount::model_origin(x0 + feed.velocity_world * dt, tool_.radius());
    pose.model_to_world = saw_mount::model_to_world();
    double mrv_rate = 0.0;
    for (int s = 0; s < n_sub; ++s) {
      feed.spindle_angle = theta0 + kTwoPi * omega * dt * s / n_sub;
      const EngagementMatrix g = workpiece_->engagement(tool_, pose, feed.spindle_angle);
      const ForceResult fr = total_force(tool_, material_, feed, g, params_.cutting);
      out.f_ext += fr.force_world;
      mrv_rate += fr.mrv_rate;
      out.engaged_mean += fr.engaged_count;
    }
    out.f_ext /= n_sub;
    out.engaged_mean /= n_sub;
    out.mrv_volume = mrv_rate / n_sub * dt;
  }

  out.e0_si = state_.e * 1e-3;
  out.e_dot0_si = state_.e_dot * 1e-3;
  out.control = osc_.step(out.e0_si, out.e_dot0_si, out.f_ext, k_p_diag, lambda_v_at(x0), dt);
  out.e1_si = out.control.step.e;
  out.e_dot1_si = out.control.step.e_dot;

  state_.e = out.e1_si * 1e3;
  state_.e_dot = out.e_dot1_si * 1e3;
  state_.x_ddot = out.control.step.e_ddot * 1e3;
  state_.x = x_d1 + state_.e;
  state_.x_dot = x_d_dot + state_.e_dot;
  state_.step_index += 1;
  state_.time = static_cast<double>(state_.step_index) * dt;

  if (!state_.x.allFinite() || !state_.x_dot.allFinite()) {
    out.safety = SafetyStatus::non_finite_state;
    return out;
  }
  if (workpiece_) out.removed_volume = workpiece_->remove_material(tool_, x0, state_.x);
  if ((state_.x - params_.workspace_min_mm).minCoeff() < 0.0 ||
      (params_.workspace_max_mm - state_.x).minCoeff() < 0.0)
    out.safety = SafetyStatus::workspace_violation;
  return out;
}

PassivityReport passivity_audit(const std::vector<EnergyRecord>& log, const Mat3& lambda_c,
                                const Mat3& k_c, bool include_tank, double tol_per_step_J,
                                const TankConfig* tank_bounds) {
  const Mat3 s = lambda_c * k_c;
  auto energy = [&](const Vec3& e, const Vec3& ed, double tank) {
    double w = 0.5 * ed.dot(lambda_c * ed) + 0.5 * e.dot(s * e);
    if (include_tank) w += tank;
    return w;
  };
  PassivityReport rep;
  rep.steps = log.size();
  rep.max_step_excess_J = log.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
  // Kadane over (excess - tol): the worst sub-interval in one pass.
  double run = 0.0;
  long long run_begin = 0;
  double best = 0.0;
  for (std::size_t k = 0; k < log.size(); ++k) {
    const EnergyRecord& r = log[k];
    const double dw = energy(r.e1, r.e_dot1, r.tank1) - energy(r.e0, r.e_dot0, r.tank0);
    const double excess = dw - r.f_ext.dot(r.e1 - r.e0);
    rep.max_step_excess_J = std::max(rep.max_step_excess_J, excess);
    if (run <= 0.0) {
      run = 0.0;
      run_begin = static_cast<long long>(k);
    }
    run += excess - tol_per_step_J;
    if (run > best) {
      best = run;
      rep.worst_begin = run_begin;
      rep.worst_end = static_cast<long long>(k);
    }
    if (tank_bounds) {
      for (double t : {r.tank0, r.tank1})
        if (t < tank_bounds->floor_J || t > tank_bounds->max_J) rep.tank_bounds_ok = false;
    }
  }
  rep.max_violation_J = best;
  rep.passed = best <= 0.0 && rep.tank_bounds_ok;
  return rep;
}

}  // namespace millforge
