#pragma once

#include "millforge/env.hpp"
#include "millforge/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace millforge {

/// Welford running mean/variance with clipping, as used for observation
/// normalisation.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim, double clip = 10.0);

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const VecX& mean() const { return mean_; }
  VecX variance() const;
  double clip() const { return clip_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  void update(const VecX& x);
  /// (x - mean) / sqrt(var + 1e-8), clipped; updates first unless frozen.
  /// NaN inputs map to 0, infinities to the clip bounds.
  VecX normalize(const VecX& x);
  VecX apply(const VecX& x) const;
  /// Combine statistics gathered elsewhere (parallel-variance merge).
  void merge(const RunningNormalizer& other);

  void set_state(double count, VecX mean, VecX m2);
  const VecX& m2() const { return m2_; }

 private:
  double count_ = 0.0;
  VecX mean_;
  VecX m2_;
  double clip_ = 10.0;
  bool frozen_ = false;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual VecX act(const VecX& observation) = 0;
  /// Called at episode start; stateful policies clear their memory here.
  virtual void reset() {}
  virtual std::string type() const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

/// Constant process parameters: stiffness held fixed, t_delta rate driven so
/// the path feed approaches `feed_mm_s` (error halving every
/// `feed_time_constant_s`), n_delta driven toward -doc_mm.
struct ProcessParams {
  double feed_mm_s = 25.0;
  double doc_mm = 5.0;
  double stiffness = 800.0;
};

class ConstantParamsPolicy : public Policy {
 public:
  ConstantParamsPolicy(ProcessParams params, const ObsLayout& layout, ActionBounds bounds,
                       double path_speed_mm_s, double control_dt,
                       double feed_time_constant_s = 1.0, double doc_gain_per_s = 5.0);

  VecX act(const VecX& observation) override;
  void reset() override { t_rate_ = 0.0; }
  std::string type() const override { return "constant_params"; }
  std::unique_ptr<Policy> clone() const override;

  const ProcessParams& params() const { return params_; }
  double feed_time_constant() const { return tau_; }
  double doc_gain() const { return doc_gain_; }

 private:
  ProcessParams params_;
  ObsLayout layout_;
  ActionBounds bounds_;
  double path_speed_;
  double control_dt_;
  double tau_;
  double doc_gain_;
  double t_rate_ = 0.0;
};

/// The reference constant-parameter policy: 1.5 m/min feed, 5 mm depth,
/// stiffness 800 on every axis.
std::unique_ptr<ConstantParamsPolicy> baseline_policy(const EnvConfig& cfg,
                                                      ProcessParams params = {});

/// a = lo + (hi - lo) (tanh(W n(x) + b) + 1) / 2 with n the frozen normaliser.
class LinearPolicy : public Policy {
 public:
  LinearPolicy(int obs_dim, VecX low, VecX high);

  VecX act(const VecX& observation) override;
  std::string type() const override { return "linear"; }
  std::unique_ptr<Policy> clone() const override;

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return static_cast<int>(low_.size()); }
  int n_params() const { return action_dim() * (obs_dim_ + 1); }
  /// Row-major weights followed by the bias.
  const VecX& params() const { return theta_; }
  void set_params(const VecX& theta);
  const VecX& low() const { return low_; }
  const VecX& high() const { return high_; }
  RunningNormalizer& normalizer() { return norm_; }
  const RunningNormalizer& normalizer() const { return norm_; }
  void set_normalizer(const RunningNormalizer& n);
  /// Collect observation statistics while acting (training rollouts).
  void set_observe(RunningNormalizer* sink) { sink_ = sink; }

 private:
  int obs_dim_;
  VecX low_;
  VecX high_;
  VecX theta_;
  RunningNormalizer norm_;
  RunningNormalizer* sink_ = nullptr;
};

/// Feed-forward network with tanh hidden layers and a linear output clipped to
/// the action bounds; the format external PPO training exports.
class MlpPolicy : public Policy {
 public:
  MlpPolicy(std::vector<MatX> weights, std::vector<VecX> biases, VecX low, VecX high);

  VecX act(const VecX& observation) override;
  std::string type() const override { return "mlp"; }
  std::unique_ptr<Policy> clone() const override;

  int obs_dim() const { return static_cast<int>(weights_.front().cols()); }
  const std::vector<MatX>& weights() const { return weights_; }
  const std::vector<VecX>& biases() const { return biases_; }
  const VecX& low() const { return low_; }
  const VecX& high() const { return high_; }
  RunningNormalizer& normalizer() { return norm_; }
  const RunningNormalizer& normalizer() const { return norm_; }
  void set_normalizer(const RunningNormalizer& n);

 private:
  std::vector<MatX> weights_;
  std::vector<VecX> biases_;
  VecX low_;
  VecX high_;
  RunningNormalizer norm_;
};

/// Bang-bang stiffness policy that pumps energy into the closed loop: high
/// stiffness while the error shrinks, low while it grows (sign of e * Δe
/// between control steps). Path feed and depth
/// follow the baseline regulators.
class StiffnessPumpPolicy : public Policy {
 public:
  StiffnessPumpPolicy(double k_low, double k_high, std::unique_ptr<ConstantParamsPolicy> base,
                      const ObsLayout& layout);
  VecX act(const VecX& observation) override;
  void reset() override;
  std::string type() const override { return "stiffness_pump"; }
  std::unique_ptr<Policy> clone() const override;

 private:
  double k_low_;
  double k_high_;
  std::unique_ptr<ConstantParamsPolicy> base_;
  ObsLayout layout_;
  Vec3 prev_e_ = Vec3::Zero();
  bool have_prev_ = false;
};

/// Random piecewise-constant stiffness, switched every `hold_steps` control
/// steps, layered over the baseline feed/depth regulators.
class RandomStiffnessPolicy : public Policy {
 public:
  RandomStiffnessPolicy(std::uint64_t seed, int hold_steps, double k_low, double k_high,
                        std::unique_ptr<ConstantParamsPolicy> base);
  VecX act(const VecX& observation) override;
  void reset() override;
  std::string type() const override { return "random_stiffness"; }
  std::unique_ptr<Policy> clone() const override;

 private:
  std::uint64_t seed_;
  int hold_;
  double k_low_;
  double k_high_;
  std::unique_ptr<ConstantParamsPolicy> base_;
  std::mt19937_64 rng_;
  int count_ = 0;
  Vec3 k_ = Vec3::Zero();
};

struct EpisodeResult {
  double total = 0.0;
  int steps = 0;
  bool done = false;
};

/// Roll one episode of `policy` in `env` from `seed`, capped at `max_steps`.
EpisodeResult run_episode(Environment& env, Policy& policy, std::uint64_t seed,
                          int max_steps = 100000);

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

struct CemConfig {
  int generations = 40;
  int population = 64;
  double elite_frac = 0.125;
  double init_std = 0.5;
  double min_std = 0.01;
  double extra_std_decay = 0.9;  // extra exploration noise, shrinks per generation
  double extra_std = 0.1;
  int episodes_per_eval = 2;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;

  void validate() const;
};

struct CemGeneration {
  int generation = 0;
  double mean = 0.0;
  double std = 0.0;
  double best = 0.0;
};

struct CemResult {
  LinearPolicy best;        // highest-scoring candidate of the last generation
  LinearPolicy mean_policy; // distribution mean after the last update
  std::vector<CemGeneration> curve;
};

/// Cross-entropy method over LinearPolicy parameters. Each generation draws
/// the population up front, evaluates every candidate on the same episode
/// seeds, refits a diagonal Gaussian to the elite set and merges the
/// observation statistics gathered by all candidates in candidate order.
CemResult train_cem(const EnvFactory& make_env, const CemConfig& cfg,
                    const LinearPolicy* init = nullptr);

}  // namespace millforge
