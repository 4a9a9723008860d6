#pragma once

#include "millforge/cutting.hpp"
#include "millforge/heightfield.hpp"
#include "millforge/osc.hpp"
#include "millforge/path.hpp"
#include "millforge/plant.hpp"
#include "millforge/tool.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace millforge {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Minimal episodic environment interface shared by the milling environment
/// and the synthetic environments used to test learners.
struct Transition {
  VecX observation;
  double reward = 0.0;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual VecX reset(std::uint64_t seed) = 0;
  virtual Transition advance(const VecX& action) = 0;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual VecX action_low() const = 0;
  virtual VecX action_high() const = 0;
};

/// Uniform [0, 1) from the top 53 bits, identical on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(std::mt19937_64& rng) const { return lo + (hi - lo) * uniform01(rng); }
  void validate(const char* what) const;
};

/// Per-episode sampling of material constants and surface geometry.
struct RandomizationSpec {
  std::array<Range, 3> kc{{{340.0, 720.0}, {750.0, 1000.0}, {-0.05, 0.1}}};
  std::array<Range, 3> ke{{{3.2, 9.3}, {0.45, 7.0}, {-0.01, 0.001}}};
  // flat, sinusoidal, perlin, fractal
  std::array<double, 4> family_weights{{1.0, 1.0, 1.0, 1.0}};
  Range amplitude_mm{0.5, 3.0};
  Range wavelength_mm{20.0, 60.0};
  Range feature_size_mm{20.0, 60.0};
  int octaves = 4;
  double lacunarity = 2.0;
  double persistence = 0.5;

  void validate() const;
  MaterialParams sample_material(std::mt19937_64& rng) const;
  SurfaceSpec sample_surface(std::mt19937_64& rng) const;
};

struct ActionBounds {
  double stiffness_min = 100.0;
  double stiffness_max = 2000.0;
  double t_rate_min = -1.0;   // s/s
  double t_rate_max = 2.0;
  double n_rate_min = -10.0;  // mm/s
  double n_rate_max = 10.0;

  void validate() const;
  VecX low() const;
  VecX high() const;
};

struct RewardWeights {
  double q_mrv = 0.01;                       // per mm^3
  double q_cut = 0.25;                       // per s
  Vec3 q_d = Vec3::Constant(0.06);           // per mm^2 s
  std::optional<Vec3> q_f;                   // per N^2 s; calibrated when unset
  double f_max_N = 50.0;
  double mrv_ref_mm3_s = 62.5;

  Vec3 force_weight() const;
  void validate() const;
};

/// Q_f such that the force penalty rate at |F_e| = F_max equals the MRV
/// reward rate at the reference removal rate: q_mrv * mrv_ref / F_max^2.
double calibrate_force_weight(double q_mrv, double f_max_N, double mrv_ref_mm3_s);

struct EnvConfig {
  ToolSpec tool;
  RandomizationSpec randomization;
  ControllerConfig controller;
  PlantParams plant;
  RewardWeights reward;
  ActionBounds action;
  // Pin the workpiece instead of sampling it on reset.
  std::optional<MaterialParams> fixed_material;
  std::optional<SurfaceSpec> fixed_surface;

  double physics_dt = 1e-3;
  double control_dt = 0.02;
  double path_length_mm = 100.0;
  double path_speed_mm_s = 20.0;
  double path_spacing_mm = 5.0;
  double grid_dx_mm = 0.1;
  int kerf_nodes = 10;
  int side_nodes = 15;
  std::optional<double> t_delta_bound_s;  // defaults to the path duration
  double n_delta_min_mm = -10.0;
  double n_delta_max_mm = 10.0;
  double stiffness_rate_limit = 5000.0;   // per s
  double initial_stiffness = 800.0;
  double capture_radius_mm = 10.0;
  double time_margin_s = 5.0;
  double workspace_margin_mm = 40.0;
  double doc_offset_mm = 0.0;
  bool augmented_observation = true;
  bool outer_product_alignment = false;
  bool record_log = true;

  void validate() const;
  int control_substeps() const;
};

/// Index map of the observation vector.
struct ObsLayout {
  int alignment = 0;
  int alignment_size = 1;
  int e = 1;
  int x_dot = 4;
  int f_ext = 7;
  int t_delta = 10;
  int n_delta = 11;
  int k_p = 12;
  int tank = -1;
  int tank_rate = -1;
  int size = 15;

  static ObsLayout make(bool augmented, bool outer_product);
  std::vector<std::string> names() const;
};

struct RewardBreakdown {
  double mrv_term = 0.0;
  double time_term = 0.0;
  double deviation_term = 0.0;
  double force_term = 0.0;
  double total = 0.0;

  RewardBreakdown& operator+=(const RewardBreakdown& o);
  void finalize() { total = mrv_term - time_term - deviation_term - force_term; }
};

enum class Termination { none, path_complete, time_limit, safety };
std::string to_string(Termination t);

struct StepInfo {
  bool action_clipped = false;
  Termination termination = Termination::none;
  SafetyStatus safety = SafetyStatus::ok;
  bool tank_depleted = false;
  LawUsed last_law = LawUsed::full;
  double mrv_volume = 0.0;      // mm^3 this control step
  double removed_volume = 0.0;  // mm^3 this control step
  int control_step = 0;
};

struct EnvStep {
  VecX observation;
  RewardBreakdown reward;
  bool done = false;
  StepInfo info;
};

/// One physics step of an episode.
struct LogRecord {
  int control_step = 0;
  double t = 0.0;
  double dt = 0.0;
  Vec3 x, x_dot, e, f_ext, f_c, k_p;
  double t_delta = 0.0;
  double n_delta = 0.0;
  double tank_J = 0.0;
  double sigma = 1.0;
  double mrv_volume = 0.0;
  double removed_volume = 0.0;
  LawUsed law = LawUsed::full;
  EnergyRecord energy;
};

class MillingEnv : public Environment {
 public:
  explicit MillingEnv(EnvConfig cfg);

  VecX reset(std::uint64_t seed) override;
  /// Reset with explicit material and surface instead of sampling them.
  VecX reset_with(std::uint64_t seed, const MaterialParams& material,
                  const SurfaceSpec& surface);
  EnvStep step(const VecX& action);
  Transition advance(const VecX& action) override;

  int observation_dim() const override { return layout_.size; }
  int action_dim() const override { return 5; }
  VecX action_low() const override { return cfg_.action.low(); }
  VecX action_high() const override { return cfg_.action.high(); }

  const EnvConfig& config() const { return cfg_; }
  const ObsLayout& layout() const { return layout_; }
  bool done() const { return done_; }
  bool active() const { return active_; }
  const RewardBreakdown& episode_reward() const { return episode_; }
  const std::vector<LogRecord>& log() const { return log_; }
  const Heightfield& workpiece() const { return *workpiece_; }
  double initial_volume() const { return initial_volume_; }
  double mrv_total() const { return mrv_total_; }
  double removed_total() const { return removed_total_; }
  const CutterPath& path() const { return *path_; }
  const MaterialParams& material() const { return material_; }
  const SurfaceSpec& surface() const { return surface_; }
  const MillingPlant& plant() const { return *plant_; }
  double time() const;
  double t_delta() const { return t_delta_; }
  double n_delta() const { return n_delta_; }
  Vec3 stiffness() const { return k_p_; }
  Termination termination() const { return termination_; }
  int control_steps() const { return control_step_; }

  /// Energy log for the passivity audit.
  std::vector<EnergyRecord> energy_log() const;

  /// Release the episode; stepping afterwards throws EpisodeFinished.
  void close();

 private:
  Vec3 setpoint() const;
  VecX observe(const Vec3& f_mean, double tank_rate) const;

  EnvConfig cfg_;
  ObsLayout layout_;
  ToolGeometry tool_;
  std::unique_ptr<Heightfield> workpiece_;
  std::unique_ptr<CutterPath> path_;
  std::unique_ptr<MillingPlant> plant_;
  MaterialParams material_;
  SurfaceSpec surface_;
  double t_delta_ = 0.0;
  double n_delta_ = 0.0;
  double t_delta_bound_ = 0.0;
  Vec3 k_p_ = Vec3::Constant(800.0);
  long long physics_step_ = 0;
  int control_step_ = 0;
  bool active_ = false;
  bool done_ = false;
  Termination termination_ = Termination::none;
  RewardBreakdown episode_;
  std::vector<LogRecord> log_;
  double initial_volume_ = 0.0;
  double mrv_total_ = 0.0;
  double removed_total_ = 0.0;
};

/// Post-hoc recomputation of episode reward components from a log, using
/// the same per-control-step grouping as the environment.
RewardBreakdown replay_reward(const std::vector<LogRecord>& log, const RewardWeights& w);

}  // namespace millforge
