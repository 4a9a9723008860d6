#pragma once

#include "millforge/types.hpp"

#include <string>

namespace millforge {

// Controller quantities are SI: e in m, e_dot in m/s, inertia in kg, gains in
// s^-2 and s^-1, forces in N, energy in J.

/// Constant plus time-varying gains of the variable operational-space law.
struct GainSchedule {
  Mat3 lambda_c = 10.0 * Mat3::Identity();  // kg
  Mat3 lambda_v = Mat3::Zero();             // kg
  Mat3 k_c = 800.0 * Mat3::Identity();      // s^-2
  Mat3 k_v = Mat3::Zero();                  // s^-2
  Mat3 k_d = Mat3::Identity();              // s^-1

  Mat3 lambda() const { return lambda_c + lambda_v; }
  Mat3 k_p() const { return k_c + k_v; }

  /// Throws NonSPDGains unless Λ_c and Λ are SPD, Λ_c K_c is symmetric
  /// positive definite, K_p is PSD and Λ K_d has a PSD symmetric part.
  void validate() const;
};

/// Per-axis damping 2 ζ sqrt(k) for a diagonal stiffness.
Mat3 damping_from_ratio(const Vec3& stiffness_diag, double zeta);

/// Non-passive injection w(t) = -Λ_v K_c e - Λ K_v e - Λ_v ë.
Vec3 w_of_t(const GainSchedule& gains, const Vec3& e, const Vec3& e_ddot);

enum class ControlLaw { full, inertia_shaping_when_undamped };
enum class LawUsed { full, inertia_shaping, fallback, plain };

std::string to_string(ControlLaw law);
ControlLaw control_law_from_string(const std::string& name);
std::string to_string(LawUsed law);

struct TankConfig {
  double init_J = 10.0;
  double max_J = 20.0;
  double floor_J = 0.01;
  // Fallback ends once x_t >= eps_min + hysteresis_frac * x_t_max.
  double hysteresis_frac = 0.1;

  void validate() const;
  double eps_min() const;    // sqrt(J)
  double x_t_max() const;    // sqrt(J)
  double reenable_J() const;
};

struct TankState {
  double energy = 10.0;  // H_t = x_t^2 / 2
  double sigma = 1.0;
  bool depleted = false;
  double p_in = 0.0;   // W, external ports kept at zero by default
  double p_out = 0.0;

  double x_t() const;
  static TankState from_config(const TankConfig& cfg);
};

struct ControlOutput {
  Vec3 force = Vec3::Zero();  // F_c, N
  Vec3 w = Vec3::Zero();      // N
  double tank_drain_rate = 0.0;  // W, w^T e_dot
  LawUsed law_used = LawUsed::full;
};

/// Algebraic control law. `k_d_const` is the damping paired with K_c, used by
/// the depleted-tank fallback. When `tank` is null the tank is bypassed and
/// the full variable law is applied (plain variable OSC).
ControlOutput control_force(const GainSchedule& gains, const Vec3& e, const Vec3& e_dot,
                            const Vec3& e_ddot, const Vec3& f_ext, const TankState* tank,
                            ControlLaw law, const Mat3& k_d_const);

/// One tank update in energy coordinates: H_t += dt (σ D + σ P_in - P_out - w^T ė),
/// clamped to [floor, max]; σ is closed while the tank is full.
TankState tank_step(const TankState& tank, const TankConfig& cfg, double dissipation_W,
                    double w_dot_e_W, double dt);

/// First-order low-pass on a finite-difference derivative, for acceleration
/// estimates from sampled velocities.
class FilteredDifferentiator {
 public:
  explicit FilteredDifferentiator(double cutoff_hz = 50.0) : cutoff_hz_(cutoff_hz) {}
  Vec3 update(const Vec3& value, double dt);
  void reset();

 private:
  double cutoff_hz_;
  bool primed_ = false;
  Vec3 last_ = Vec3::Zero();
  Vec3 state_ = Vec3::Zero();
};

/// Linear error dynamics of one step, written as
///   (Λ - M) ë = -P e - D ė + c + F_e
/// where Λ is the plant inertia. Every law in this library fits this form.
struct LawMatrices {
  Mat3 inertia_less = Mat3::Zero();  // M
  Mat3 stiffness = Mat3::Zero();     // P
  Mat3 damping = Mat3::Zero();       // D
  Vec3 bias = Vec3::Zero();          // c
  // Dissipation matrix credited to the tank, Λ(t) K_d for the active law.
  Mat3 dissipation = Mat3::Zero();
  LawUsed law = LawUsed::full;
};

LawMatrices law_matrices(const GainSchedule& gains, LawUsed law, const Vec3& f_ext,
                         const Mat3& k_d_const);

struct ErrorStep {
  Vec3 e = Vec3::Zero();
  Vec3 e_dot = Vec3::Zero();
  Vec3 e_ddot = Vec3::Zero();     // midpoint acceleration
  Vec3 e_mid = Vec3::Zero();
  Vec3 e_dot_mid = Vec3::Zero();
  Vec3 control_force = Vec3::Zero();
  Vec3 w_mid = Vec3::Zero();
  double dissipation_W = 0.0;     // ė_mid^T Λ K_d ė_mid
  double w_dot_e_W = 0.0;         // w_mid^T ė_mid
};

/// Implicit-midpoint step of the error dynamics with F_e held over the step.
/// The discrete energy balance of ½ėᵀΛ_cė + ½eᵀΛ_cK_ce is then exact:
///   ΔH_c = dt (w^T ė_mid - ė_mid^T D ė_mid + F_e^T ė_mid).
ErrorStep integrate_error(const GainSchedule& gains, const LawMatrices& law,
                          const Vec3& e, const Vec3& e_dot, const Vec3& f_ext, double dt);

/// Controller configuration exposed through scenario files.
struct ControllerConfig {
  double lambda_c_kg = 10.0;
  double k_c = 800.0;          // s^-2, constant stiffness part per axis
  double damping_ratio = 1.0;
  TankConfig tank;
  ControlLaw law = ControlLaw::full;
  bool et_enabled = true;

  void validate() const;
};

/// Stateful energy-tank OSC: owns the tank, picks the law each step, and
/// advances the error coordinates.
class EnergyTankOsc {
 public:
  explicit EnergyTankOsc(const ControllerConfig& cfg = {});

  void reset();
  const ControllerConfig& config() const { return cfg_; }
  const TankState& tank() const { return tank_; }

  /// Gains for a commanded stiffness diagonal and plant inertia variation.
  GainSchedule schedule(const Vec3& k_p_diag, const Mat3& lambda_v) const;
  Mat3 k_d_const() const;

  struct Result {
    ErrorStep step;
    LawUsed law = LawUsed::full;
    double tank_before_J = 0.0;
    double tank_after_J = 0.0;
    double sigma = 1.0;
  };

  Result step(const Vec3& e, const Vec3& e_dot, const Vec3& f_ext, const Vec3& k_p_diag,
              const Mat3& lambda_v, double dt);

 private:
  ControllerConfig cfg_;
  TankState tank_;
};

}  // namespace millforge
