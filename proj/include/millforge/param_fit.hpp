#pragma once

#include "millforge/cutting.hpp"
#include "millforge/tool.hpp"
#include "millforge/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace millforge {

struct ForceRecord {
  double t = 0.0;                // s
  Vec3 feed = Vec3::Zero();      // mm/s, world
  Vec3 force = Vec3::Zero();     // N, world
  bool engaged = false;
};

struct ExperimentMeta {
  ToolSpec tool;
  double rdoc_mm = 1.0;
  // Informational; the milling direction follows from the feed sign.
  bool down_milling = true;
  // Spindle angle at t = 0; instantaneous predictions need it.
  double spindle_angle0 = 0.0;
};

struct ForceLog {
  std::vector<ForceRecord> records;
  ExperimentMeta meta;

  void validate() const;
};

/// Subtract the mean of the leading pre-engagement records from every record.
ForceLog bias_correct(const ForceLog& log, int min_baseline = 10);

/// Mean force over `samples_per_rev` uniformly spaced spindle angles of the
/// analytic immersion `rdoc_mm`, as a linear map of the six constants:
/// F = A [Kc; Ke].
Eigen::Matrix<double, 3, 6> average_force_basis(const ToolGeometry& tool, const Vec3& feed_mm_s,
                                                double rdoc_mm, int samples_per_rev = 360,
                                                const CuttingOptions& opts = {},
                                                double start_angle = 0.0);

/// Levenberg-Marquardt for r(p) with Jacobian J(p); λ grows ×2 on a rejected
/// step and shrinks ÷3 on an accepted one.
struct LmOptions {
  int max_iterations = 500;
  double gradient_tol = 1e-10;  // on ||J^T r||, relative to the initial value
  double step_tol = 1e-14;      // relative parameter change
  double lambda0 = 1e-3;
};

struct LmResult {
  Eigen::VectorXd p;
  double cost = 0.0;  // ½||r||²
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<double> accepted_costs;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// Throws NoConvergence when the iteration budget runs out.
LmResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian,
                             Eigen::VectorXd p0, const LmOptions& opts = {});

struct FitOptions {
  // Per-axis weight on world force components; zero drops an axis, as when
  // forces transverse to the feed are not trusted.
  Vec3 axis_weight = Vec3::Ones();
  // Parameters held at `initial` (order kc_t, kc_r, kc_a, ke_t, ke_r, ke_a).
  std::array<bool, 6> frozen{};
  std::optional<MaterialParams> initial;
  int samples_per_rev = 360;
  // Fit every engaged record instead of the per-feed averages.
  bool instantaneous = false;
  CuttingOptions cutting;
  LmOptions lm;
};

struct FeedGroup {
  Vec3 feed = Vec3::Zero();
  Vec3 mean_force = Vec3::Zero();
  int count = 0;
};

struct FitResult {
  MaterialParams material;
  Vec3 rmse_axis = Vec3::Zero();       // N, instantaneous residuals of engaged records
  double rmse = 0.0;                   // N, over all three axes
  Vec3 rmse_average_axis = Vec3::Zero();  // N, per-feed averaged residuals
  int iterations = 0;
  bool converged = false;
  std::vector<FeedGroup> groups;
};

/// Engaged records grouped by identical feed vector, in ascending feed order.
std::vector<FeedGroup> group_by_feed(const ForceLog& log);

/// Fits the averaged model force to the averaged measurements per feed.
/// Expects a bias-corrected log. Throws RankDeficient when the feeds cannot
/// separate the cutting and edge terms of the free parameters.
FitResult fit_constants(const ForceLog& log, const FitOptions& opts = {});

/// Closed-form least squares on the same averaged data (independent check).
MaterialParams fit_constants_linear(const ForceLog& log, const FitOptions& opts = {});

/// Instantaneous model force for a record at time t (engagement from rdoc).
Vec3 model_force_at(const ToolGeometry& tool, const MaterialParams& m, const ExperimentMeta& meta,
                    const ForceRecord& r, const CuttingOptions& opts = {});

struct SyntheticLogSpec {
  ExperimentMeta meta;
  MaterialParams material;
  std::vector<double> feeds_mm_s{10.0, 20.0, 30.0, 40.0, 50.0};
  Vec3 feed_direction = Vec3::UnitX();
  int samples_per_rev = 360;
  int revolutions_per_feed = 10;
  int baseline_records = 100;
  Vec3 bias = Vec3::Zero();
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Pre-engagement records (bias plus noise) followed, for each feed, by
/// records at spindle angles 2πk/n over whole revolutions.
ForceLog synthetic_force_log(const SyntheticLogSpec& spec);

}  // namespace millforge
