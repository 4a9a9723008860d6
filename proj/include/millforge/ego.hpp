#pragma once

#include "millforge/env.hpp"
#include "millforge/gp.hpp"
#include "millforge/policy.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace millforge {

/// Search box over (feed mm/s, rdoc mm, stiffness). Inactive dimensions are
/// held at `fixed`.
struct EgoBox {
  Vec3 lower{1.0, 0.5, 100.0};
  Vec3 upper{50.0, 15.0, 2000.0};
  std::array<bool, 3> active{{true, true, true}};
  Vec3 fixed{25.0, 5.0, 800.0};

  void validate() const;
  int n_active() const;
  Eigen::VectorXd active_lower() const;
  Eigen::VectorXd active_upper() const;
  /// Expand an active-dimension vector to the full (feed, rdoc, stiffness).
  Vec3 expand(const Eigen::VectorXd& active_params) const;
};

struct EgoConfig {
  int budget = 115;
  double initial_fraction = 0.4;  // Latin hypercube share of the budget
  int ei_candidates = 2000;
  int grid_per_dim = 64;           // posterior-mean grid for the optimum
  int pd_samples = 64;
  int pd_grid = 16;                // grid per remaining dimension for PD averaging
  int final_restarts = 8;
  int loop_restarts = 1;           // in addition to the warm start
  std::uint64_t seed = 0;
  EgoBox box;

  void validate() const;
};

struct EgoSample {
  Vec3 params;  // feed, rdoc, stiffness
  double reward = 0.0;
  bool initial_design = false;
};

struct PartialDependence {
  int dim = 0;  // index into the full (feed, rdoc, stiffness) vector
  std::vector<double> x;
  std::vector<double> y;
};

struct EgoResult {
  Vec3 optimum;
  double optimum_mean = 0.0;
  GaussianProcess surrogate;
  std::vector<EgoSample> history;
  std::vector<PartialDependence> partial_dependence;
};

using EgoObjective = std::function<double(const Vec3& params)>;

/// Latin hypercube sample of `n` points in [0, 1]^d.
Eigen::MatrixXd latin_hypercube(int n, int d, std::mt19937_64& rng);

/// LHS design followed by expected-improvement acquisition; the optimum is
/// the posterior-mean maximiser on a grid, polished by projected ascent.
EgoResult ego_optimize(const EgoObjective& objective, const EgoConfig& cfg);

/// Posterior mean averaged over a grid of the other active dimensions.
PartialDependence partial_dependence(const GaussianProcess& gp, const EgoBox& box, int full_dim,
                                     int samples = 64, int grid = 16);

/// One episode of the milling environment under constant process parameters.
/// Safety terminations score `safety_penalty` instead of the episode total.
struct RolloutObjective {
  EnvConfig env;
  std::uint64_t episode_seed = 0;
  double safety_penalty = -10.0;

  double operator()(const Vec3& params) const;
};

}  // namespace millforge
