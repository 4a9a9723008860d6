#include "millforge/env.hpp"

#include <algorithm>
#include <cmath>

namespace millforge {

void Range::validate(const char* what) const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw InvalidArgument(std::string("range '") + what + "' must satisfy lo <= hi");
}

void RandomizationSpec::validate() const {
  for (const auto& r : kc) r.validate("kc");
  for (const auto& r : ke) r.validate("ke");
  amplitude_mm.validate("amplitude_mm");
  wavelength_mm.validate("wavelength_mm");
  feature_size_mm.validate("feature_size_mm");
  double total = 0.0;
  for (double w : family_weights) {
    if (!(w >= 0.0)) throw InvalidArgument("surface family weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw InvalidArgument("at least one surface family needs weight");
  if (amplitude_mm.lo < 0.0) throw InvalidArgument("amplitude must be >= 0");
  if (wavelength_mm.lo <= 0.0 || feature_size_mm.lo <= 0.0)
    throw InvalidArgument("wavelength and feature size must be positive");
  if (octaves < 1) throw InvalidArgument("octaves must be >= 1");
}

MaterialParams RandomizationSpec::sample_material(std::mt19937_64& rng) const {
  MaterialParams m;
  for (int i = 0; i < 3; ++i) m.kc[i] = kc[i].sample(rng);
  for (int i = 0; i < 3; ++i) m.ke[i] = ke[i].sample(rng);
  return m;
}

SurfaceSpec RandomizationSpec::sample_surface(std::mt19937_64& rng) const {
  double total = 0.0;
  for (double w : family_weights) total += w;
  const double u = uniform01(rng) * total;
  int pick = 3;
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    acc += family_weights[k];
    if (u < acc && family_weights[k] > 0.0) {
      pick = k;
      break;
    }
  }
  while (family_weights[pick] <= 0.0) --pick;
  SurfaceSpec s;
  s.family = static_cast<SurfaceFamily>(pick);
  s.amplitude_mm = amplitude_mm.sample(rng);
  s.wavelength_mm = wavelength_mm.sample(rng);
  s.feature_size_mm = feature_size_mm.sample(rng);
  s.phase_rad = kTwoPi * uniform01(rng);
  s.octaves = octaves;
  s.lacunarity = lacunarity;
  s.persistence = persistence;
  s.seed = rng();
  return s;
}

void ActionBounds::validate() const {
  if (!(stiffness_min > 0.0 && stiffness_max >= stiffness_min))
    throw InvalidArgument("stiffness bounds must satisfy 0 < min <= max");
  if (!(t_rate_max >= t_rate_min) || !(n_rate_max >= n_rate_min))
    throw InvalidArgument("rate bounds must satisfy min <= max");
  if (t_rate_min < -1.0)
    throw InvalidArgument("t_delta rate below -1 would run the path backwards");
}

VecX ActionBounds::low() const {
  VecX v(5);
  v << stiffness_min, stiffness_min, stiffness_min, t_rate_min, n_rate_min;
  return v;
}

VecX ActionBounds::high() const {
  VecX v(5);
  v << stiffness_max, stiffness_max, stiffness_max, t_rate_max, n_rate_max;
  return v;
}

double calibrate_force_weight(double q_mrv, double f_max_N, double mrv_ref_mm3_s) {
  if (!(f_max_N > 0.0)) throw InvalidArgument("F_max must be positive");
  return q_mrv * mrv_ref_mm3_s / (f_max_N * f_max_N);
}

Vec3 RewardWeights::force_weight() const {
  if (q_f) return *q_f;
  return Vec3::Constant(calibrate_force_weight(q_mrv, f_max_N, mrv_ref_mm3_s));
}

void RewardWeights::validate() const {
  if (q_mrv < 0.0 || q_cut < 0.0 || q_d.minCoeff() < 0.0)
    throw InvalidArgument("reward weights must be >= 0");
  if (q_f && q_f->minCoeff() < 0.0) throw InvalidArgument("force weights must be >= 0");
  if (!(f_max_N > 0.0) || !(mrv_ref_mm3_s >= 0.0))
    throw InvalidArgument("force calibration needs F_max > 0 and mrv_ref >= 0");
}

void EnvConfig::validate() const {
  randomization.validate();
  if (fixed_material) fixed_material->validate(true);
  if (fixed_surface) fixed_surface->validate();
  controller.validate();
  plant.validate();
  reward.validate();
  action.validate();
  if (!(physics_dt > 0.0) || !(control_dt > 0.0))
    throw InvalidArgument("time steps must be positive");
  const double ratio = control_dt / physics_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0)
    throw InvalidArgument("control_dt must be an integer multiple of physics_dt");
  if (!(path_length_mm > 0.0) || !(path_speed_mm_s > 0.0) || !(path_spacing_mm > 0.0))
    throw InvalidArgument("path length, speed and spacing must be positive");
  if (!(grid_dx_mm > 0.0) || kerf_nodes < 2 || side_nodes < 2)
    throw InvalidArgument("grid needs dx > 0, >= 2 kerf nodes and >= 2 side nodes");
  if (t_delta_bound_s && !(*t_delta_bound_s > 0.0))
    throw InvalidArgument("t_delta bound must be positive");
  if (!(n_delta_max_mm >= n_delta_min_mm)) throw InvalidArgument("n_delta bounds inverted");
  if (!(stiffness_rate_limit > 0.0)) throw InvalidArgument("stiffness rate limit must be > 0");
  if (initial_stiffness < action.stiffness_min || initial_stiffness > action.stiffness_max)
    throw InvalidArgument("initial stiffness must lie within the action bounds");
  if (!(capture_radius_mm > 0.0) || !(time_margin_s >= 0.0) || !(workspace_margin_mm > 0.0))
    throw InvalidArgument("capture radius, time margin and workspace margin must be positive");
}

int EnvConfig::control_substeps() const {
  return static_cast<int>(std::lround(control_dt / physics_dt));
}

ObsLayout ObsLayout::make(bool augmented, bool outer_product) {
  ObsLayout l;
  l.alignment = 0;
  l.alignment_size = outer_product ? 9 : 1;
  l.e = l.alignment_size;
  l.x_dot = l.e + 3;
  l.f_ext = l.x_dot + 3;
  l.t_delta = l.f_ext + 3;
  l.n_delta = l.t_delta + 1;
  l.k_p = l.n_delta + 1;
  l.size = l.k_p + 3;
  if (augmented) {
    l.tank = l.size;
    l.tank_rate = l.size + 1;
    l.size += 2;
  }
  return l;
}

std::vector<std::string> ObsLayout::names() const {
  std::vector<std::string> n;
  if (alignment_size == 1) {
    n.push_back("path_tool_alignment");
  } else {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        n.push_back("path_tool_outer_" + std::to_string(i) + std::to_string(j));
  }
  for (const char* a : {"e_x", "e_y", "e_z", "x_dot_x", "x_dot_y", "x_dot_z", "f_ext_x",
                        "f_ext_y", "f_ext_z", "t_delta", "n_delta", "k_p_x", "k_p_y", "k_p_z"})
    n.emplace_back(a);
  if (tank >= 0) {
    n.emplace_back("tank_energy");
    n.emplace_back("tank_energy_rate");
  }
  return n;
}

RewardBreakdown& RewardBreakdown::operator+=(const RewardBreakdown& o) {
  mrv_term += o.mrv_term;
  time_term += o.time_term;
  deviation_term += o.deviation_term;
  force_term += o.force_term;
  total += o.total;
  return *this;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::none: return "none";
    case Termination::path_complete: return "path_complete";
    case Termination::time_limit: return "time_limit";
    case Termination::safety: return "safety";
  }
  return "none";
}

namespace {

// Physics-step reward increments. Shared by the environment and the replay
// so both accumulate identical floating-point sequences.
void accumulate(RewardBreakdown& acc, const RewardWeights& w, const Vec3& qf, double dt,
                double mrv_volume, const Vec3& e, const Vec3& f) {
  acc.mrv_term += w.q_mrv * mrv_volume;
  acc.time_term += w.q_cut * dt;
  acc.deviation_term += dt * (w.q_d.array() * e.array().square()).sum();
  acc.force_term += dt * (qf.array() * f.array().square()).sum();
}

}  // namespace

MillingEnv::MillingEnv(EnvConfig cfg)
    : cfg_(std::move(cfg)),
      layout_(ObsLayout::make(cfg_.augmented_observation, cfg_.outer_product_alignment)),
      tool_(cfg_.tool) {
  cfg_.validate();
}

double MillingEnv::time() const { return static_cast<double>(physics_step_) * cfg_.physics_dt; }

Vec3 MillingEnv::setpoint() const {
  return path_->setpoint(time(), t_delta_, n_delta_ - cfg_.doc_offset_mm);
}

VecX MillingEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const MaterialParams m = cfg_.randomization.sample_material(rng);
  const SurfaceSpec s = cfg_.randomization.sample_surface(rng);
  return reset_with(seed, cfg_.fixed_material.value_or(m), cfg_.fixed_surface.value_or(s));
}

VecX MillingEnv::reset_with(std::uint64_t seed, const MaterialParams& material,
                            const SurfaceSpec& surface) {
  (void)seed;
  material_ = material;
  surface_ = surface;

  const double r = tool_.radius();
  const double width = tool_.axial_length();
  GridSpec grid;
  grid.dx = cfg_.grid_dx_mm;
  grid.origin_x = -r - 5.0;
  grid.nx = static_cast<int>(std::ceil((cfg_.path_length_mm + 2.0 * r + 10.0) / grid.dx)) + 1;
  grid.dy = width / cfg_.kerf_nodes;
  grid.ny = cfg_.kerf_nodes + 2 * cfg_.side_nodes;
  // Kerf aligned to nodes: the path runs at y = 0 and the blade's side faces
  // fall half a node outside the outermost kerf nodes.
  const int last_kerf = tool_.disc_stack_sign() > 0 ? cfg_.side_nodes + cfg_.kerf_nodes - 1
                                                    : cfg_.side_nodes;
  grid.origin_y = tool_.disc_stack_sign() > 0 ? -(last_kerf + 0.5) * grid.dy
                                              : -(last_kerf - 0.5) * grid.dy;
  workpiece_ = std::make_unique<Heightfield>(generate(surface_, grid));

  path_ = std::make_unique<CutterPath>(surface_following_path(
      *workpiece_, 0.0, 0.0, cfg_.path_length_mm, cfg_.path_speed_mm_s, cfg_.path_spacing_mm));
  t_delta_bound_ = cfg_.t_delta_bound_s.value_or(path_->duration());

  PlantParams pp = cfg_.plant;
  const double zlo = std::min(workpiece_->max_height(), 0.0) - 2.0 * r;
  const double m = cfg_.workspace_margin_mm;
  pp.workspace_min_mm = Vec3(-m, -m, zlo - m);
  pp.workspace_max_mm = Vec3(cfg_.path_length_mm + m, m, workpiece_->max_height() + m);
  {
    // Lowest surface point bounds how deep the tip may go.
    double lo = workpiece_->max_height();
    for (double h : workpiece_->heights()) lo = std::min(lo, h);
    pp.workspace_min_mm.z() = lo - m;
  }
  plant_ = std::make_unique<MillingPlant>(tool_, material_, cfg_.controller, pp);

  physics_step_ = 0;
  control_step_ = 0;
  t_delta_ = 0.0;
  n_delta_ = 0.0;
  k_p_ = Vec3::Constant(cfg_.initial_stiffness);
  const Vec3 x_d = setpoint();
  plant_->reset(workpiece_.get(), x_d, path_->eval(0.0).velocity);
  initial_volume_ = workpiece_->volume();
  mrv_total_ = 0.0;
  removed_total_ = 0.0;
  episode_ = RewardBreakdown{};
  log_.clear();
  active_ = true;
  done_ = false;
  termination_ = Termination::none;
  return observe(Vec3::Zero(), 0.0);
}

VecX MillingEnv::observe(const Vec3& f_mean, double tank_rate) const {
  VecX o(layout_.size);
  const PlantState& st = plant_->state();
  const Vec3 c_dot = path_->eval(time() + t_delta_).velocity;
  if (layout_.alignment_size == 1) {
    o[layout_.alignment] = c_dot.dot(st.x_dot);
  } else {
    const Mat3 outer = c_dot * st.x_dot.transpose();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) o[layout_.alignment + 3 * i + j] = outer(i, j);
  }
  o.segment<3>(layout_.e) = st.e;
  o.segment<3>(layout_.x_dot) = st.x_dot;
  o.segment<3>(layout_.f_ext) = f_mean;
  o[layout_.t_delta] = t_delta_;
  o[layout_.n_delta] = n_delta_;
  o.segment<3>(layout_.k_p) = k_p_;
  if (layout_.tank >= 0) {
    o[layout_.tank] = plant_->controller().tank().energy;
    o[layout_.tank_rate] = tank_rate;
  }
  return o;
}

EnvStep MillingEnv::step(const VecX& action) {
  if (!active_ || done_) throw EpisodeFinished("episode is not active; call reset first");
  if (action.size() != 5) throw DimensionMismatch("action must have 5 entries");
  if (!action.allFinite()) throw InvalidArgument("action contains non-finite values");

  const VecX lo = cfg_.action.low();
  const VecX hi = cfg_.action.high();
  const VecX a = action.cwiseMax(lo).cwiseMin(hi);
  EnvStep out;
  out.info.action_clipped = (a.array() != action.array()).any();
  out.info.control_step = control_step_;

  const Vec3 k_target = a.head<3>();
  const double t_rate = a[3];
  const double n_rate = a[4];
  const double dt = cfg_.physics_dt;
  const double dk_max = cfg_.stiffness_rate_limit * dt;
  const Vec3 qf = cfg_.reward.force_weight();
  const double tank_start = plant_->controller().tank().energy;

  RewardBreakdown step_reward;
  Vec3 f_sum = Vec3::Zero();
  int executed = 0;
  for (int k = 0; k < cfg_.control_substeps(); ++k) {
    const Vec3 x_d0 = setpoint();
    k_p_ += (k_target - k_p_).cwiseMax(Vec3::Constant(-dk_max)).cwiseMin(Vec3::Constant(dk_max));
    t_delta_ = std::clamp(t_delta_ + t_rate * dt, -t_delta_bound_, t_delta_bound_);
    n_delta_ = std::clamp(n_delta_ + n_rate * dt, cfg_.n_delta_min_mm, cfg_.n_delta_max_mm);
    ++physics_step_;
    const Vec3 x_d1 = setpoint();

    const PlantStepResult r = plant_->step(x_d0, x_d1, k_p_, dt);
    ++executed;
    const PlantState& st = plant_->state();
    accumulate(step_reward, cfg_.reward, qf, dt, r.mrv_volume, st.e, r.f_ext);
    f_sum += r.f_ext;
    out.info.mrv_volume += r.mrv_volume;
    out.info.removed_volume += r.removed_volume;
    out.info.last_law = r.control.law;
    mrv_total_ += r.mrv_volume;
    removed_total_ += r.removed_volume;

    if (cfg_.record_log) {
      LogRecord rec;
      rec.control_step = control_step_;
      rec.t = time();
      rec.dt = dt;
      rec.x = st.x;
      rec.x_dot = st.x_dot;
      rec.e = st.e;
      rec.f_ext = r.f_ext;
      rec.f_c = r.control.step.control_force;
      rec.k_p = k_p_;
      rec.t_delta = t_delta_;
      rec.n_delta = n_delta_;
      rec.tank_J = r.control.tank_after_J;
      rec.sigma = r.control.sigma;
      rec.mrv_volume = r.mrv_volume;
      rec.removed_volume = r.removed_volume;
      rec.law = r.control.law;
      rec.energy = {r.e0_si, r.e1_si, r.e_dot0_si, r.e_dot1_si, r.f_ext,
                    r.control.tank_before_J, r.control.tank_after_J};
      log_.push_back(rec);
    }
    if (r.safety != SafetyStatus::ok) {
      out.info.safety = r.safety;
      termination_ = Termination::safety;
      break;
    }
  }
  step_reward.finalize();
  out.reward = step_reward;
  episode_ += step_reward;
  out.info.tank_depleted = plant_->controller().tank().depleted;

  const double tank_rate =
      (plant_->controller().tank().energy - tank_start) / (executed * cfg_.physics_dt);
  const Vec3 f_mean = f_sum / executed;
  const PlantState& st = plant_->state();
  if (termination_ != Termination::safety) {
    const double s = time() + t_delta_;
    if (s >= path_->duration() && st.e.norm() <= cfg_.capture_radius_mm)
      termination_ = Termination::path_complete;
    else if (time() >= path_->duration() + cfg_.time_margin_s - 1e-12)
      termination_ = Termination::time_limit;
  }
  // A diverged state cannot be observed meaningfully; report zeros instead.
  if (st.x.allFinite() && st.x_dot.allFinite()) {
    out.observation = observe(f_mean.allFinite() ? f_mean : Vec3::Zero(), tank_rate);
  } else {
    out.observation = VecX::Zero(layout_.size);
  }
  out.info.termination = termination_;
  done_ = termination_ != Termination::none;
  out.done = done_;
  ++control_step_;
  return out;
}

Transition MillingEnv::advance(const VecX& action) {
  EnvStep s = step(action);
  return {std::move(s.observation), s.reward.total, s.done};
}

std::vector<EnergyRecord> MillingEnv::energy_log() const {
  std::vector<EnergyRecord> out;
  out.reserve(log_.size());
  for (const auto& r : log_) out.push_back(r.energy);
  return out;
}

void MillingEnv::close() { active_ = false; }

RewardBreakdown replay_reward(const std::vector<LogRecord>& log, const RewardWeights& w) {
  const Vec3 qf = w.force_weight();
  RewardBreakdown episode;
  RewardBreakdown step;
  int current = log.empty() ? 0 : log.front().control_step;
  for (const auto& r : log) {
    if (r.control_step != current) {
      step.finalize();
      episode += step;
      step = RewardBreakdown{};
      current = r.control_step;
    }
    accumulate(step, w, qf, r.dt, r.mrv_volume, r.e, r.f_ext);
  }
  if (!log.empty()) {
    step.finalize();
    episode += step;
  }
  return episode;
}

}  // namespace millforge
