#include "millforge/osc.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace millforge {

namespace {

bool symmetric(const Mat3& m, double rel = 1e-9) {
  return (m - m.transpose()).norm() <= rel * std::max(1.0, m.norm());
}

double min_sym_eig(const Mat3& m) {
  const Mat3 s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

void GainSchedule::validate() const {
  if (!lambda_c.allFinite() || !lambda_v.allFinite() || !k_c.allFinite() ||
      !k_v.allFinite() || !k_d.allFinite())
    throw NonSPDGains("gains must be finite");
  if (!symmetric(lambda_c) || min_sym_eig(lambda_c) <= 0.0)
    throw NonSPDGains("lambda_c must be symmetric positive definite");
  const Mat3 lam = lambda();
  if (!symmetric(lam) || min_sym_eig(lam) <= 0.0)
    throw NonSPDGains("lambda_c + lambda_v must be symmetric positive definite");
  const Mat3 s = lambda_c * k_c;
  if (!symmetric(s) || min_sym_eig(s) <= 0.0)
    throw NonSPDGains("lambda_c * k_c must be symmetric positive definite");
  const double scale = std::max(1.0, k_p().norm());
  if (min_sym_eig(k_p()) < -1e-12 * scale)
    throw NonSPDGains("k_c + k_v must be positive semidefinite");
  const Mat3 d = lam * k_d;
  if (min_sym_eig(d) < -1e-12 * std::max(1.0, d.norm()))
    throw NonSPDGains("lambda * k_d must have a positive semidefinite symmetric part");
}

Mat3 damping_from_ratio(const Vec3& stiffness_diag, double zeta) {
  Mat3 kd = Mat3::Zero();
  for (int i = 0; i < 3; ++i) kd(i, i) = 2.0 * zeta * std::sqrt(std::max(stiffness_diag[i], 0.0));
  return kd;
}

Vec3 w_of_t(const GainSchedule& g, const Vec3& e, const Vec3& e_ddot) {
  return -g.lambda_v * (g.k_c * e) - g.lambda() * (g.k_v * e) - g.lambda_v * e_ddot;
}

std::string to_string(ControlLaw law) {
  return law == ControlLaw::full ? "full" : "inertia_shaping_when_undamped";
}

ControlLaw control_law_from_string(const std::string& name) {
  if (name == "full") return ControlLaw::full;
  if (name == "inertia_shaping_when_undamped") return ControlLaw::inertia_shaping_when_undamped;
  throw InvalidArgument("unknown control law '" + name + "'");
}

std::string to_string(LawUsed law) {
  switch (law) {
    case LawUsed::full: return "full";
    case LawUsed::inertia_shaping: return "inertia-shaping";
    case LawUsed::fallback: return "fallback";
    case LawUsed::plain: return "plain";
  }
  return "full";
}

void TankConfig::validate() const {
  if (!(floor_J > 0.0)) throw InvalidArgument("tank floor must be positive");
  if (!(max_J > floor_J)) throw InvalidArgument("tank max must exceed its floor");
  if (!(init_J >= floor_J && init_J <= max_J))
    throw InvalidArgument("initial tank energy must lie within [floor, max]");
  if (!(hysteresis_frac >= 0.0)) throw InvalidArgument("hysteresis must be >= 0");
}

double TankConfig::eps_min() const { return std::sqrt(2.0 * floor_J); }
double TankConfig::x_t_max() const { return std::sqrt(2.0 * max_J); }

double TankConfig::reenable_J() const {
  const double x = eps_min() + hysteresis_frac * x_t_max();
  return std::min(0.5 * x * x, max_J);
}

double TankState::x_t() const { return std::sqrt(2.0 * energy); }

TankState TankState::from_config(const TankConfig& cfg) {
  TankState t;
  t.energy = cfg.init_J;
  t.sigma = cfg.init_J >= cfg.max_J ? 0.0 : 1.0;
  return t;
}

ControlOutput control_force(const GainSchedule& g, const Vec3& e, const Vec3& e_dot,
                            const Vec3& e_ddot, const Vec3& f_ext, const TankState* tank,
                            ControlLaw law, const Mat3& k_d_const) {
  g.validate();
  const Mat3 lam = g.lambda();
  ControlOutput out;
  if (tank && tank->depleted) {
    out.force = -g.lambda_c * (g.k_c * e) - lam * (k_d_const * e_dot) + g.lambda_v * e_ddot;
    out.law_used = LawUsed::fallback;
    return out;
  }
  if (law == ControlLaw::inertia_shaping_when_undamped && g.k_v.isZero(0.0)) {
    const Mat3 lc_inv = g.lambda_c.inverse();
    out.force = lam * (-lc_inv * (lam * (g.k_d * e_dot)) - g.k_c * e) +
                g.lambda_v * (lc_inv * f_ext);
    out.law_used = LawUsed::inertia_shaping;
    return out;
  }
  out.w = w_of_t(g, e, e_ddot);
  out.force = -g.lambda_c * (g.k_c * e) - lam * (g.k_d * e_dot) + out.w + g.lambda_v * e_ddot;
  out.tank_drain_rate = out.w.dot(e_dot);
  out.law_used = tank ? LawUsed::full : LawUsed::plain;
  return out;
}

TankState tank_step(const TankState& tank, const TankConfig& cfg, double dissipation_W,
                    double w_dot_e_W, double dt) {
  TankState next = tank;
  const double sigma = tank.energy >= cfg.max_J ? 0.0 : 1.0;
  const double rate = sigma * (dissipation_W + tank.p_in) - tank.p_out - w_dot_e_W;
  next.energy = std::clamp(tank.energy + dt * rate, cfg.floor_J, cfg.max_J);
  next.sigma = next.energy >= cfg.max_J ? 0.0 : 1.0;
  return next;
}

Vec3 FilteredDifferentiator::update(const Vec3& value, double dt) {
  if (!primed_) {
    primed_ = true;
    last_ = value;
    state_.setZero();
    return state_;
  }
  const Vec3 raw = (value - last_) / dt;
  last_ = value;
  const double alpha = dt / (dt + 1.0 / (kTwoPi * cutoff_hz_));
  state_ += alpha * (raw - state_);
  return state_;
}

void FilteredDifferentiator::reset() {
  primed_ = false;
  last_.setZero();
  state_.setZero();
}

LawMatrices law_matrices(const GainSchedule& g, LawUsed law, const Vec3& f_ext,
                         const Mat3& k_d_const) {
  const Mat3 lam = g.lambda();
  LawMatrices m;
  m.law = law;
  switch (law) {
    case LawUsed::full:
    case LawUsed::plain:
      m.stiffness = lam * g.k_p();
      m.damping = lam * g.k_d;
      m.dissipation = m.damping;
      break;
    case LawUsed::inertia_shaping: {
      const Mat3 lc_inv = g.lambda_c.inverse();
      m.stiffness = lam * g.k_c;
      m.damping = lam * lc_inv * lam * g.k_d;
      m.bias = g.lambda_v * (lc_inv * f_ext);
      m.dissipation = lam * g.k_d;
      break;
    }
    case LawUsed::fallback:
      m.inertia_less = g.lambda_v;
      m.stiffness = g.lambda_c * g.k_c;
      m.damping = lam * k_d_const;
      m.dissipation = m.damping;
      break;
  }
  return m;
}

ErrorStep integrate_error(const GainSchedule& g, const LawMatrices& m, const Vec3& e,
                          const Vec3& e_dot, const Vec3& f_ext, double dt) {
  const Mat3 lam = g.lambda();
  const Mat3 a_mat = lam - m.inertia_less + (0.25 * dt * dt) * m.stiffness + (0.5 * dt) * m.damping;
  const Vec3 rhs = -m.stiffness * (e + 0.5 * dt * e_dot) - m.damping * e_dot + m.bias + f_ext;
  ErrorStep s;
  s.e_ddot = a_mat.partialPivLu().solve(rhs);
  s.e_dot_mid = e_dot + 0.5 * dt * s.e_ddot;
  s.e_mid = e + 0.5 * dt * s.e_dot_mid;
  s.e = e + dt * s.e_dot_mid;
  s.e_dot = e_dot + dt * s.e_ddot;
  s.control_force = lam * s.e_ddot - f_ext;
  // Whatever the constant-gain port does not explain is the injected power.
  s.w_mid = g.lambda_c * s.e_ddot + g.lambda_c * (g.k_c * s.e_mid) +
            m.dissipation * s.e_dot_mid - f_ext;
  s.dissipation_W = s.e_dot_mid.dot(m.dissipation * s.e_dot_mid);
  s.w_dot_e_W = s.w_mid.dot(s.e_dot_mid);
  return s;
}

void ControllerConfig::validate() const {
  if (!(lambda_c_kg > 0.0)) throw InvalidArgument("lambda_c_kg must be positive");
  if (!(k_c > 0.0)) throw InvalidArgument("k_c must be positive");
  if (!(damping_ratio >= 0.0)) throw InvalidArgument("damping_ratio must be >= 0");
  tank.validate();
}

EnergyTankOsc::EnergyTankOsc(const ControllerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  reset();
}

void EnergyTankOsc::reset() { tank_ = TankState::from_config(cfg_.tank); }

GainSchedule EnergyTankOsc::schedule(const Vec3& k_p_diag, const Mat3& lambda_v) const {
  GainSchedule g;
  g.lambda_c = cfg_.lambda_c_kg * Mat3::Identity();
  g.lambda_v = lambda_v;
  g.k_c = cfg_.k_c * Mat3::Identity();
  g.k_v = Mat3(k_p_diag.asDiagonal()) - g.k_c;
  g.k_d = damping_from_ratio(k_p_diag, cfg_.damping_ratio);
  return g;
}

Mat3 EnergyTankOsc::k_d_const() const {
  return damping_from_ratio(Vec3::Constant(cfg_.k_c), cfg_.damping_ratio);
}

EnergyTankOsc::Result EnergyTankOsc::step(const Vec3& e, const Vec3& e_dot,
                                          const Vec3& f_ext, const Vec3& k_p_diag,
                                          const Mat3& lambda_v, double dt) {
  const GainSchedule g = schedule(k_p_diag, lambda_v);
  g.validate();
  const Mat3 kdc = k_d_const();
  Result r;
  r.tank_before_J = tank_.energy;

  if (!cfg_.et_enabled) {
    r.law = LawUsed::plain;
    r.step = integrate_error(g, law_matrices(g, LawUsed::plain, f_ext, kdc), e, e_dot, f_ext, dt);
    r.tank_after_J = tank_.energy;
    r.sigma = tank_.sigma;
    return r;
  }

  LawUsed law = LawUsed::fallback;
  if (!tank_.depleted) {
    const bool w_zero = g.k_v.isZero(0.0);
    law = (cfg_.law == ControlLaw::inertia_shaping_when_undamped && w_zero) ? LawUsed::inertia_shaping
                                                              : LawUsed::full;
  }
  r.step = integrate_error(g, law_matrices(g, law, f_ext, kdc), e, e_dot, f_ext, dt);

  const double sigma = tank_.energy >= cfg_.tank.max_J ? 0.0 : 1.0;
  const double predicted =
      tank_.energy + dt * (sigma * (r.step.dissipation_W + tank_.p_in) - tank_.p_out -
                           r.step.w_dot_e_W);
  if (law != LawUsed::fallback && predicted < cfg_.tank.floor_J) {
    // Not enough stored energy for this step: redo it with the passive law.
    tank_.depleted = true;
    law = LawUsed::fallback;
    r.step = integrate_error(g, law_matrices(g, law, f_ext, kdc), e, e_dot, f_ext, dt);
  }
  // The fallback leaves no injected power; drop rounding residue.
  const double w_dot_e = law == LawUsed::fallback ? 0.0 : r.step.w_dot_e_W;
  tank_ = tank_step(tank_, cfg_.tank, r.step.dissipation_W, w_dot_e, dt);
  if (tank_.depleted && tank_.energy >= cfg_.tank.reenable_J()) tank_.depleted = false;

  r.law = law;
  r.tank_after_J = tank_.energy;
  r.sigma = sigma;
  return r;
}

}  // namespace millforge
