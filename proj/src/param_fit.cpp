#include "millforge/param_fit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <tuple>

namespace millforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Eigen::Matrix<double, 6, 1> pack(const MaterialParams& m) {
  Eigen::Matrix<double, 6, 1> p;
  p << m.kc, m.ke;
  return p;
}

MaterialParams unpack(const Eigen::Matrix<double, 6, 1>& p) {
  MaterialParams m;
  m.kc = p.head<3>();
  m.ke = p.tail<3>();
  return m;
}

MaterialParams unit_material(int j) {
  Eigen::Matrix<double, 6, 1> p = Eigen::Matrix<double, 6, 1>::Zero();
  p[j] = 1.0;
  return unpack(p);
}

double spindle_angle_at(const ToolGeometry& tool, const ExperimentMeta& meta, double t) {
  return meta.spindle_angle0 + kTwoPi * tool.spindle_speed() * t;
}

FeedState feed_state(const Vec3& feed, double theta) {
  FeedState fs;
  fs.velocity_world = feed;
  fs.world_to_model = saw_mount::world_to_model();
  fs.spindle_angle = theta;
  return fs;
}

Eigen::Matrix<double, 3, 6> instantaneous_basis(const ToolGeometry& tool,
                                                const ExperimentMeta& meta, const ForceRecord& r,
                                                const CuttingOptions& opts) {
  const double theta = spindle_angle_at(tool, meta, r.t);
  const EngagementMatrix g = immersion_engagement(tool, theta, meta.rdoc_mm);
  Eigen::Matrix<double, 3, 6> a;
  for (int j = 0; j < 6; ++j)
    a.col(j) = total_force(tool, unit_material(j), feed_state(r.feed, theta), g, opts).force_world;
  return a;
}

// Stacked weighted design: rows (group, axis) with nonzero weight.
struct Design {
  MatrixXd a;  // rows x 6
  VectorXd b;
};

Design build_design(const ForceLog& log, const ToolGeometry& tool, const FitOptions& o,
                    const std::vector<FeedGroup>& groups) {
  std::vector<int> axes;
  for (int k = 0; k < 3; ++k) {
    if (o.axis_weight[k] < 0.0) throw InvalidArgument("axis weights must be >= 0");
    if (o.axis_weight[k] > 0.0) axes.push_back(k);
  }
  if (axes.empty()) throw InvalidArgument("at least one axis needs positive weight");
  Design d;
  if (o.instantaneous) {
    std::size_t n = 0;
    for (const auto& r : log.records) n += r.engaged ? 1 : 0;
    d.a.resize(static_cast<Eigen::Index>(n * axes.size()), 6);
    d.b.resize(d.a.rows());
    Eigen::Index row = 0;
    for (const auto& r : log.records) {
      if (!r.engaged) continue;
      const auto basis = instantaneous_basis(tool, log.meta, r, o.cutting);
      for (int k : axes) {
        const double w = std::sqrt(o.axis_weight[k]);
        d.a.row(row) = w * basis.row(k);
        d.b[row] = w * r.force[k];
        ++row;
      }
    }
    return d;
  }
  d.a.resize(static_cast<Eigen::Index>(groups.size() * axes.size()), 6);
  d.b.resize(d.a.rows());
  Eigen::Index row = 0;
  for (const auto& g : groups) {
    const auto basis = average_force_basis(tool, g.feed, log.meta.rdoc_mm, o.samples_per_rev,
                                           o.cutting, log.meta.spindle_angle0);
    for (int k : axes) {
      const double w = std::sqrt(o.axis_weight[k]);
      d.a.row(row) = w * basis.row(k);
      d.b[row] = w * g.mean_force[k];
      ++row;
    }
  }
  return d;
}

MaterialParams default_initial() {
  MaterialParams m;
  m.kc = Vec3(500.0, 500.0, 0.0);
  m.ke = Vec3(5.0, 5.0, 0.0);
  return m;
}

std::vector<int> free_indices(const FitOptions& o) {
  std::vector<int> idx;
  for (int j = 0; j < 6; ++j)
    if (!o.frozen[j]) idx.push_back(j);
  return idx;
}

void check_rank(const MatrixXd& j) {
  if (j.cols() == 0) return;
  if (j.rows() < j.cols())
    throw RankDeficient("fewer force equations than free constants; use more feed rates");
  // Column scaling first so the rank test ignores the Kc/Ke unit mismatch.
  VectorXd norms = j.colwise().norm();
  for (Eigen::Index c = 0; c < norms.size(); ++c)
    if (!(norms[c] > 0.0)) throw RankDeficient("a free constant has no effect on the fitted forces");
  const MatrixXd js = j * norms.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<MatrixXd> svd(js);
  const VectorXd s = svd.singularValues();
  if (s[s.size() - 1] <= 1e-9 * s[0])
    throw RankDeficient("feeds do not separate cutting and edge constants");
}

}  // namespace

void ForceLog::validate() const {
  if (records.empty()) throw InvalidArgument("force log is empty");
  for (std::size_t i = 1; i < records.size(); ++i)
    if (!(records[i].t > records[i - 1].t))
      throw InvalidArgument("force log times must be strictly increasing");
  for (const auto& r : records)
    if (!r.feed.allFinite() || !r.force.allFinite() || !std::isfinite(r.t))
      throw InvalidArgument("force log contains non-finite values");
  if (!(meta.rdoc_mm > 0.0)) throw InvalidArgument("rdoc must be positive");
}

ForceLog bias_correct(const ForceLog& log, int min_baseline) {
  std::size_t n = 0;
  Vec3 sum = Vec3::Zero();
  while (n < log.records.size() && !log.records[n].engaged) {
    sum += log.records[n].force;
    ++n;
  }
  if (static_cast<int>(n) < min_baseline)
    throw InsufficientBaseline("need at least " + std::to_string(min_baseline) +
                               " pre-engagement records, found " + std::to_string(n));
  const Vec3 bias = sum / static_cast<double>(n);
  ForceLog out = log;
  for (auto& r : out.records) r.force -= bias;
  return out;
}

Eigen::Matrix<double, 3, 6> average_force_basis(const ToolGeometry& tool, const Vec3& feed,
                                                double rdoc_mm, int samples_per_rev,
                                                const CuttingOptions& opts, double start_angle) {
  const EngagementQuery q = [&](double theta) {
    return immersion_engagement(tool, theta, rdoc_mm);
  };
  Eigen::Matrix<double, 3, 6> a;
  for (int j = 0; j < 6; ++j)
    a.col(j) = revolution_average_force(tool, unit_material(j), feed_state(feed, start_angle), q,
                                        samples_per_rev, opts, Exec::serial)
                   .force_world;
  return a;
}

LmResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian, VectorXd p,
                             const LmOptions& o) {
  LmResult res;
  VectorXd r = residual(p);
  double cost = 0.5 * r.squaredNorm();
  double lambda = o.lambda0;
  MatrixXd j = jacobian(p);
  VectorXd g = j.transpose() * r;
  const double g0 = std::max(g.norm(), 1e-300);
  res.accepted_costs.push_back(cost);
  for (int it = 0; it < o.max_iterations; ++it) {
    res.iterations = it + 1;
    if (g.norm() <= o.gradient_tol * g0 || cost == 0.0) {
      res.converged = true;
      break;
    }
    const MatrixXd h = j.transpose() * j;
    MatrixXd aug = h;
    for (Eigen::Index k = 0; k < h.rows(); ++k)
      aug(k, k) += lambda * std::max(h(k, k), 1e-12);
    const VectorXd step = aug.ldlt().solve(-g);
    const VectorXd cand = p + step;
    const VectorXd rc = residual(cand);
    const double cc = 0.5 * rc.squaredNorm();
    if (std::isfinite(cc) && cc < cost) {
      const double rel = step.norm() / std::max(p.norm(), 1e-300);
      p = cand;
      r = rc;
      cost = cc;
      j = jacobian(p);
      g = j.transpose() * r;
      lambda /= 3.0;
      res.accepted_costs.push_back(cost);
      if (rel <= o.step_tol) {
        res.converged = true;
        break;
      }
    } else {
      lambda *= 2.0;
      // No representable decrease left: the gradient is at rounding level.
      if (lambda > 1e30) {
        res.converged = true;
        break;
      }
    }
  }
  res.p = p;
  res.cost = cost;
  res.gradient_norm = g.norm();
  if (!res.converged)
    throw NoConvergence("Levenberg-Marquardt did not converge in " +
                        std::to_string(o.max_iterations) + " iterations");
  return res;
}

std::vector<FeedGroup> group_by_feed(const ForceLog& log) {
  std::map<std::tuple<double, double, double>, FeedGroup> m;
  for (const auto& r : log.records) {
    if (!r.engaged) continue;
    FeedGroup& g = m[{r.feed.x(), r.feed.y(), r.feed.z()}];
    g.feed = r.feed;
    g.mean_force += r.force;
    g.count += 1;
  }
  std::vector<FeedGroup> out;
  for (auto& [k, g] : m) {
    g.mean_force /= g.count;
    out.push_back(g);
  }
  return out;
}

Vec3 model_force_at(const ToolGeometry& tool, const MaterialParams& m, const ExperimentMeta& meta,
                    const ForceRecord& r, const CuttingOptions& opts) {
  const double theta = spindle_angle_at(tool, meta, r.t);
  return total_force(tool, m, feed_state(r.feed, theta),
                     immersion_engagement(tool, theta, meta.rdoc_mm), opts)
      .force_world;
}

FitResult fit_constants(const ForceLog& log, const FitOptions& o) {
  log.validate();
  const ToolGeometry tool(log.meta.tool);
  FitResult res;
  res.groups = group_by_feed(log);
  if (res.groups.empty()) throw InvalidArgument("force log has no engaged records");
  const Design d = build_design(log, tool, o, res.groups);
  const std::vector<int> free = free_indices(o);
  const Eigen::Matrix<double, 6, 1> init = pack(o.initial.value_or(default_initial()));

  MatrixXd jf(d.a.rows(), static_cast<Eigen::Index>(free.size()));
  for (std::size_t c = 0; c < free.size(); ++c) jf.col(c) = d.a.col(free[c]);
  check_rank(jf);
  VectorXd fixed_part = d.a * init;
  for (int c : free) fixed_part -= d.a.col(c) * init[c];
  const VectorXd target = d.b - fixed_part;

  VectorXd p0(free.size());
  for (std::size_t c = 0; c < free.size(); ++c) p0[c] = init[free[c]];
  Eigen::Matrix<double, 6, 1> full = init;
  if (!free.empty()) {
    const LmResult lm = levenberg_marquardt([&](const VectorXd& p) { return VectorXd(jf * p - target); },
                                            [&](const VectorXd&) { return jf; }, p0, o.lm);
    for (std::size_t c = 0; c < free.size(); ++c) full[free[c]] = lm.p[c];
    res.iterations = lm.iterations;
    res.converged = lm.converged;
  } else {
    res.converged = true;
  }
  res.material = unpack(full);

  // Instantaneous residuals over engaged records.
  Vec3 ss = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& r : log.records) {
    if (!r.engaged) continue;
    const Vec3 e = r.force - model_force_at(tool, res.material, log.meta, r, o.cutting);
    ss += e.cwiseAbs2();
    ++n;
  }
  res.rmse_axis = (ss / static_cast<double>(n)).cwiseSqrt();
  res.rmse = std::sqrt(ss.sum() / (3.0 * static_cast<double>(n)));
  Vec3 sa = Vec3::Zero();
  for (const auto& g : res.groups) {
    const auto basis = average_force_basis(tool, g.feed, log.meta.rdoc_mm, o.samples_per_rev,
                                           o.cutting, log.meta.spindle_angle0);
    sa += (g.mean_force - basis * full).cwiseAbs2();
  }
  res.rmse_average_axis = (sa / static_cast<double>(res.groups.size())).cwiseSqrt();
  return res;
}

MaterialParams fit_constants_linear(const ForceLog& log, const FitOptions& o) {
  log.validate();
  const ToolGeometry tool(log.meta.tool);
  const auto groups = group_by_feed(log);
  if (groups.empty()) throw InvalidArgument("force log has no engaged records");
  const Design d = build_design(log, tool, o, groups);
  const std::vector<int> free = free_indices(o);
  const Eigen::Matrix<double, 6, 1> init = pack(o.initial.value_or(default_initial()));
  MatrixXd jf(d.a.rows(), static_cast<Eigen::Index>(free.size()));
  for (std::size_t c = 0; c < free.size(); ++c) jf.col(c) = d.a.col(free[c]);
  check_rank(jf);
  VectorXd rhs = d.b;
  for (int j = 0; j < 6; ++j)
    if (o.frozen[j]) rhs -= d.a.col(j) * init[j];
  Eigen::Matrix<double, 6, 1> full = init;
  if (!free.empty()) {
    const VectorXd sol = jf.colPivHouseholderQr().solve(rhs);
    for (std::size_t c = 0; c < free.size(); ++c) full[free[c]] = sol[c];
  }
  return unpack(full);
}

ForceLog synthetic_force_log(const SyntheticLogSpec& s) {
  if (s.samples_per_rev < 1 || s.revolutions_per_feed < 1 || s.baseline_records < 0)
    throw InvalidArgument("synthetic log sizes must be positive");
  if (s.feeds_mm_s.empty()) throw InvalidArgument("synthetic log needs at least one feed");
  if (!(s.noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  if (!(s.feed_direction.norm() > 0.0)) throw InvalidArgument("feed direction must be nonzero");
  const ToolGeometry tool(s.meta.tool);
  const double omega = tool.spindle_speed();
  if (!(omega > 0.0)) throw ZeroSpindleSpeed("synthetic log needs a turning spindle");
  const double dt = 1.0 / (omega * s.samples_per_rev);
  const Vec3 dir = s.feed_direction.normalized();

  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto noisy = [&](const Vec3& f) {
    Vec3 v = f + s.bias;
    if (s.noise_sigma > 0.0)
      for (int k = 0; k < 3; ++k) v[k] += s.noise_sigma * noise(rng);
    return v;
  };

  ForceLog log;
  log.meta = s.meta;
  for (int k = 0; k < s.baseline_records; ++k)
    log.records.push_back({k * dt, Vec3::Zero(), noisy(Vec3::Zero()), false});
  // Cutting starts on a whole revolution so every feed samples the angles
  // 2πk/n (plus the initial angle) exactly.
  long long rev = (s.baseline_records + s.samples_per_rev - 1) / s.samples_per_rev;
  if (s.baseline_records > 0 && rev * s.samples_per_rev == s.baseline_records) ++rev;
  for (double v : s.feeds_mm_s) {
    const long long k0 = rev * s.samples_per_rev;
    for (long long k = 0; k < static_cast<long long>(s.revolutions_per_feed) * s.samples_per_rev; ++k) {
      ForceRecord r;
      r.t = static_cast<double>(k0 + k) * dt;
      r.feed = v * dir;
      r.engaged = true;
      r.force = noisy(model_force_at(tool, s.material, s.meta, r));
      log.records.push_back(r);
    }
    rev += s.revolutions_per_feed;
  }
  return log;
}

}  // namespace millforge
