#include "millforge/ego.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace millforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void EgoBox::validate() const {
  if ((upper - lower).minCoeff() <= 0.0) throw InvalidArgument("EGO box must have lower < upper");
  if (n_active() < 1) throw InvalidArgument("EGO needs at least one active dimension");
}

int EgoBox::n_active() const {
  return static_cast<int>(std::count(active.begin(), active.end(), true));
}

VectorXd EgoBox::active_lower() const {
  VectorXd v(n_active());
  for (int k = 0, j = 0; k < 3; ++k)
    if (active[k]) v[j++] = lower[k];
  return v;
}

VectorXd EgoBox::active_upper() const {
  VectorXd v(n_active());
  for (int k = 0, j = 0; k < 3; ++k)
    if (active[k]) v[j++] = upper[k];
  return v;
}

Vec3 EgoBox::expand(const VectorXd& a) const {
  if (a.size() != n_active()) throw DimensionMismatch("active parameter vector has wrong size");
  Vec3 p = fixed;
  for (int k = 0, j = 0; k < 3; ++k)
    if (active[k]) p[k] = a[j++];
  return p;
}

void EgoConfig::validate() const {
  box.validate();
  if (budget < 10) throw InvalidArgument("EGO budget must be >= 10");
  if (!(initial_fraction > 0.0 && initial_fraction < 1.0))
    throw InvalidArgument("initial_fraction must lie in (0, 1)");
  if (ei_candidates < 1 || grid_per_dim < 2 || pd_samples < 2 || pd_grid < 1)
    throw InvalidArgument("EGO sampling sizes must be positive");
  if (final_restarts < 1 || loop_restarts < 0) throw InvalidArgument("bad GP restart counts");
}

MatrixXd latin_hypercube(int n, int d, std::mt19937_64& rng) {
  MatrixXd x(n, d);
  std::vector<int> perm(n);
  for (int k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[i], perm[j]);
    }
    for (int i = 0; i < n; ++i) x(i, k) = (perm[i] + uniform01(rng)) / n;
  }
  return x;
}

namespace {

VectorXd to_raw(const VectorXd& u, const VectorXd& lo, const VectorXd& hi) {
  return lo + u.cwiseProduct(hi - lo);
}

// Projected gradient ascent on the posterior mean, in unit-box coordinates.
VectorXd polish(const GaussianProcess& gp, VectorXd u, const VectorXd& lo, const VectorXd& hi) {
  const VectorXd span = hi - lo;
  double v = gp.predict_mean(to_raw(u, lo, hi));
  double step = 0.05;
  for (int it = 0; it < 200 && step > 1e-9; ++it) {
    const VectorXd g = gp.mean_gradient(to_raw(u, lo, hi)).cwiseProduct(span);
    const double gn = g.norm();
    if (!(gn > 0.0)) break;
    bool moved = false;
    while (step > 1e-9) {
      const VectorXd c = (u + step * g / gn).cwiseMax(0.0).cwiseMin(1.0);
      const double cv = gp.predict_mean(to_raw(c, lo, hi));
      if (cv > v) {
        u = c;
        v = cv;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return u;
}

}  // namespace

PartialDependence partial_dependence(const GaussianProcess& gp, const EgoBox& box, int full_dim,
                                     int samples, int grid) {
  if (full_dim < 0 || full_dim > 2 || !box.active[full_dim])
    throw InvalidArgument("partial dependence dimension must be active");
  if (samples < 2 || grid < 1) throw InvalidArgument("partial dependence sizes must be positive");
  const int d = box.n_active();
  if (gp.dim() != d) throw DimensionMismatch("surrogate dimension does not match the box");
  int target = 0;
  for (int k = 0; k < full_dim; ++k)
    if (box.active[k]) ++target;
  const VectorXd lo = box.active_lower();
  const VectorXd hi = box.active_upper();

  // Grid over the remaining active dimensions (cell centres).
  int n_rest = 1;
  for (int k = 0; k < d - 1; ++k) n_rest *= grid;
  PartialDependence pd;
  pd.dim = full_dim;
  MatrixXd q(n_rest, d);
  for (int s = 0; s < samples; ++s) {
    const double xv = lo[target] + (hi[target] - lo[target]) * s / (samples - 1);
    for (int r = 0; r < n_rest; ++r) {
      int idx = r;
      for (int k = 0; k < d; ++k) {
        if (k == target) {
          q(r, k) = xv;
          continue;
        }
        const int c = idx % grid;
        idx /= grid;
        q(r, k) = lo[k] + (hi[k] - lo[k]) * (c + 0.5) / grid;
      }
    }
    pd.x.push_back(xv);
    pd.y.push_back(gp.predict_mean_batch(q, Exec::serial).mean());
  }
  return pd;
}

EgoResult ego_optimize(const EgoObjective& objective, const EgoConfig& cfg) {
  cfg.validate();
  const EgoBox& box = cfg.box;
  const int d = box.n_active();
  const VectorXd lo = box.active_lower();
  const VectorXd hi = box.active_upper();
  std::mt19937_64 rng(cfg.seed);

  EgoResult res;
  MatrixXd xs(0, d);
  VectorXd ys(0);
  auto record = [&](const VectorXd& u, bool initial) {
    const VectorXd raw = to_raw(u, lo, hi);
    EgoSample s;
    s.params = box.expand(raw);
    s.reward = objective(s.params);
    s.initial_design = initial;
    res.history.push_back(s);
    xs.conservativeResize(xs.rows() + 1, Eigen::NoChange);
    xs.row(xs.rows() - 1) = raw.transpose();
    ys.conservativeResize(ys.size() + 1);
    ys[ys.size() - 1] = s.reward;
  };

  const int n_init = std::clamp(static_cast<int>(std::lround(cfg.initial_fraction * cfg.budget)),
                                2, cfg.budget);
  const MatrixXd design = latin_hypercube(n_init, d, rng);
  for (int i = 0; i < n_init; ++i) record(design.row(i).transpose(), true);

  GpOptions gopt;
  gopt.lower = lo;
  gopt.upper = hi;
  std::optional<GpHyper> warm;
  while (static_cast<int>(res.history.size()) < cfg.budget) {
    gopt.restarts = 1 + cfg.loop_restarts;
    gopt.initial = warm;
    gopt.seed = rng();
    const GaussianProcess gp = GaussianProcess::fit(xs, ys, gopt);
    warm = gp.hyper();
    const double best = ys.maxCoeff();

    auto ei_at = [&](const VectorXd& u) { return expected_improvement(gp.predict(to_raw(u, lo, hi)), best); };
    std::vector<std::pair<double, VectorXd>> cands;
    cands.reserve(cfg.ei_candidates);
    for (int c = 0; c < cfg.ei_candidates; ++c) {
      VectorXd u(d);
      for (int k = 0; k < d; ++k) u[k] = uniform01(rng);
      cands.emplace_back(ei_at(u), u);
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    // Local refinement of the top few by shrinking random perturbations.
    const int n_refine = std::min<int>(5, static_cast<int>(cands.size()));
    for (int c = 0; c < n_refine; ++c) {
      double radius = 0.05;
      for (int it = 0; it < 40; ++it) {
        VectorXd u = cands[c].second;
        for (int k = 0; k < d; ++k) u[k] += radius * (2.0 * uniform01(rng) - 1.0);
        u = u.cwiseMax(0.0).cwiseMin(1.0);
        const double e = ei_at(u);
        if (e > cands[c].first) {
          cands[c] = {e, u};
        } else {
          radius *= 0.85;
        }
      }
    }
    std::stable_sort(cands.begin(), cands.begin() + n_refine,
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    // Skip proposals that duplicate an existing sample.
    VectorXd pick = cands.front().second;
    for (const auto& c : cands) {
      const VectorXd raw = to_raw(c.second, lo, hi);
      double nearest = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < xs.rows(); ++i)
        nearest = std::min(nearest, (xs.row(i).transpose() - raw).cwiseQuotient(hi - lo).norm());
      if (nearest > 1e-6) {
        pick = c.second;
        break;
      }
    }
    record(pick, false);
  }

  gopt.restarts = cfg.final_restarts;
  gopt.initial = warm;
  gopt.seed = rng();
  res.surrogate = GaussianProcess::fit(xs, ys, gopt);

  // Posterior-mean argmax on a regular grid, then local ascent.
  const int g = cfg.grid_per_dim;
  long total = 1;
  for (int k = 0; k < d; ++k) total *= g;
  MatrixXd q(total, d);
  for (long r = 0; r < total; ++r) {
    long idx = r;
    for (int k = 0; k < d; ++k) {
      const long c = idx % g;
      idx /= g;
      q(r, k) = lo[k] + (hi[k] - lo[k]) * static_cast<double>(c) / (g - 1);
    }
  }
  const VectorXd m = res.surrogate.predict_mean_batch(q);
  Eigen::Index arg = 0;
  m.maxCoeff(&arg);
  VectorXd u0 = (q.row(arg).transpose() - lo).cwiseQuotient(hi - lo);
  const VectorXd u = polish(res.surrogate, u0, lo, hi);
  const VectorXd raw = to_raw(u, lo, hi);
  res.optimum = box.expand(raw);
  res.optimum_mean = res.surrogate.predict_mean(raw);

  for (int k = 0; k < 3; ++k)
    if (box.active[k])
      res.partial_dependence.push_back(
          partial_dependence(res.surrogate, box, k, cfg.pd_samples, cfg.pd_grid));
  return res;
}

double RolloutObjective::operator()(const Vec3& params) const {
  MillingEnv e(env);
  ProcessParams pp;
  pp.feed_mm_s = params[0];
  pp.doc_mm = params[1];
  pp.stiffness = params[2];
  auto policy = baseline_policy(env, pp);
  const EpisodeResult r = run_episode(e, *policy, episode_seed);
  if (e.termination() == Termination::safety) return safety_penalty;
  return r.total;
}

}  // namespace millforge
