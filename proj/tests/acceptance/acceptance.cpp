// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "millforge/config.hpp"
#include "millforge/cutting.hpp"
#include "millforge/ego.hpp"
#include "millforge/env.hpp"
#include "millforge/evaluate.hpp"
#include "millforge/heightfield.hpp"
#include "millforge/osc.hpp"
#include "millforge/param_fit.hpp"
#include "millforge/plant.hpp"
#include "millforge/policy.hpp"

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace millforge;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void verdict(const char* name, bool ok, double seconds, const std::string& detail) {
  std::printf("%s  %-28s %7.1fs  %s\n", ok ? "PASS" : "FAIL", name, seconds, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Runs `body`, which returns (ok, detail); a thrown error is a failure.
void criterion(const char* name, double limit_s,
               const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = Clock::now();
  std::pair<bool, std::string> r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("threw: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (s > limit_s) {
    r.first = false;
    r.second += fmt(" (over the %.0f s budget)", limit_s);
  }
  verdict(name, r.first, s, r.second);
}

ScenarioConfig scenario(const char* file) {
  return load_scenario(std::string(MILLFORGE_CONFIG_DIR) + "/" + file);
}

// ---- chip thickness and forces ------------------------------------------

std::pair<bool, std::string> chip_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0), a(0.0, kTwoPi);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const Vec3 f(u(rng), u(rng), u(rng));
    const double th = a(rng);
    const double closed = f.x() * std::sin(th) + f.y() * std::cos(th);
    const Mat3 r = element_frame(th).rotation_f_to_m;
    const double matrix_form = Eigen::RowVector3d(0.0, -1.0, 0.0) * (r.transpose() * f);
    worst = std::max({worst, std::abs(matrix_form - closed), std::abs(chip_thickness(f, th).raw - closed)});
  }
  return {worst < 1e-12, fmt("max |matrix - closed| = %.3g over 1e5 draws", worst)};
}

// Element-by-element reference rebuilt from the tool spec.
Vec3 scalar_force(const ToolSpec& spec, const std::vector<double>& b, const MaterialParams& m,
                  const FeedState& feed, const EngagementMatrix& g, bool edge_when_engaged) {
  const double omega = spec.spindle_rpm / 60.0;
  const Vec3 fpt = feed.world_to_model * feed.velocity_world / (spec.n_flutes * omega);
  Vec3 total = Vec3::Zero();
  for (int f = 0; f < spec.n_flutes; ++f)
    for (int d = 0; d < spec.n_discs; ++d) {
      if (!g(f, d)) continue;
      const double bb = b[f * spec.n_discs + d];
      const double th = feed.spindle_angle + f * spec.pitch_rad -
                        (d + 0.5) * std::tan(spec.helix_rad) * bb / spec.radius_mm;
      const double c = std::cos(th), s = std::sin(th);
      const double raw = fpt.x() * s + fpt.y() * c;
      if (!(raw > 0.0) && !edge_when_engaged) continue;
      const double h = std::max(raw, 0.0);
      const double lt = bb * (m.ke[0] + h * m.kc[0]);
      const double lr = bb * (m.ke[1] + h * m.kc[1]);
      const double la = bb * (m.ke[2] + h * m.kc[2]);
      total += Vec3(-c * lt - s * lr, s * lt - c * lr, la);
    }
  return total;
}

std::pair<bool, std::string> force_oracle() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    ToolSpec s;
    s.n_flutes = 1 + static_cast<int>(u(rng) * 60);
    s.n_discs = 1 + static_cast<int>(u(rng) * 4);
    s.radius_mm = 5.0 + 30.0 * u(rng);
    s.pitch_rad = kTwoPi / s.n_flutes * (0.8 + 0.4 * u(rng));
    s.helix_rad = 0.6 * u(rng);
    s.spindle_rpm = 200.0 + 3000.0 * u(rng);
    std::vector<double> b(static_cast<std::size_t>(s.n_flutes * s.n_discs));
    for (auto& x : b) x = 0.1 + 2.0 * u(rng);
    const ToolGeometry tool(s, b);
    MaterialParams m{Vec3(340 + 380 * u(rng), 750 + 250 * u(rng), -0.05 + 0.15 * u(rng)),
                     Vec3(3.2 + 6.1 * u(rng), 0.45 + 6.55 * u(rng), -0.01 + 0.011 * u(rng))};
    FeedState feed;
    feed.velocity_world = 50.0 * Vec3(n(rng), n(rng), n(rng));
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    feed.world_to_model = q.normalized().toRotationMatrix();
    feed.spindle_angle = kTwoPi * u(rng);
    EngagementMatrix g(s.n_flutes, s.n_discs);
    const double p = u(rng);
    for (int f = 0; f < s.n_flutes; ++f)
      for (int d = 0; d < s.n_discs; ++d) g.set(f, d, u(rng) < p);
    for (bool edge : {false, true}) {
      CuttingOptions o;
      o.edge_force_when_engaged = edge;
      const ForceResult r = total_force(tool, m, feed, g, o);
      const Vec3 ref = scalar_force(s, b, m, feed, g, edge);
      worst = std::max(worst, (r.force_model - ref).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-9, fmt("max |F - F_oracle| = %.3g N over 1e3 configurations", worst)};
}

std::pair<bool, std::string> zero_cases() {
  const ToolGeometry tool;
  const MaterialParams m{Vec3(700, 800, 0.03), Vec3(8, 0.5, -0.01)};
  FeedState moving;
  moving.velocity_world = Vec3(20, 0, -3);
  moving.world_to_model = saw_mount::world_to_model();
  const ForceResult idle = total_force(tool, m, moving, EngagementMatrix(tool.n_flutes(), tool.n_discs()));
  FeedState still;
  still.world_to_model = saw_mount::world_to_model();
  CuttingOptions o;
  o.edge_force_when_engaged = false;
  const ForceResult stopped =
      total_force(tool, m, still, EngagementMatrix(tool.n_flutes(), tool.n_discs(), true), o);
  const bool ok = idle.force_world == Vec3::Zero() && idle.mrv_rate == 0.0 &&
                  stopped.force_world == Vec3::Zero() && stopped.mrv_rate == 0.0;
  return {ok, fmt("no engagement |F| = %g, MRV = %g; zero feed |F| = %g", idle.force_world.norm(),
                  idle.mrv_rate, stopped.force_world.norm())};
}

// ---- parameter identification -------------------------------------------

std::pair<bool, std::string> fit_round_trip() {
  const ScenarioConfig sc = scenario("fit_fixture.json");
  const MaterialParams truth = *sc.env.fixed_material;
  auto rel = [&](const MaterialParams& m) {
    double w = 0.0;
    for (int k = 0; k < 3; ++k)
      w = std::max({w, std::abs(m.kc[k] / truth.kc[k] - 1.0), std::abs(m.ke[k] / truth.ke[k] - 1.0)});
    return w;
  };
  SyntheticLogSpec s;
  s.meta.tool = sc.env.tool;
  s.meta.rdoc_mm = 13.72;
  s.meta.spindle_angle0 = 0.0137;
  s.material = truth;
  s.bias = Vec3(1.0, 2.0, 3.0);
  s.samples_per_rev = sc.fit.samples_per_rev;

  s.revolutions_per_feed = 10;
  const FitResult clean = fit_constants(bias_correct(synthetic_force_log(s)), sc.fit);
  s.revolutions_per_feed = 200;
  s.noise_sigma = 0.5;
  s.seed = 7;
  const FitResult noisy = fit_constants(bias_correct(synthetic_force_log(s)), sc.fit);
  const double e0 = rel(clean.material), e1 = rel(noisy.material);
  const double rmse_gap = std::abs(noisy.rmse - s.noise_sigma) / s.noise_sigma;
  return {e0 < 1e-3 && e1 < 0.05 && rmse_gap <= 0.2,
          fmt("noiseless max rel err %.2e, noisy %.2e, noisy RMSE %.3f N (sigma 0.5)", e0, e1, noisy.rmse)};
}

// ---- energy tank and controller ------------------------------------------

std::pair<bool, std::string> passivity_suite() {
  const ScenarioConfig base = scenario("stress.json");
  const double zetas[] = {1.0, 0.5, 0.1};
  int passed = 0, tank_ok = 0, completed = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    EnvConfig cfg = base.env;
    cfg.controller.et_enabled = true;
    cfg.controller.damping_ratio = zetas[i % 3];
    MillingEnv env(cfg);
    RandomStiffnessPolicy pol(5000 + i, 1 + i % 5, base.stress.k_low, base.stress.k_high,
                              baseline_policy(cfg, base.baseline));
    run_episode(env, pol, 7000 + i);
    const ControllerConfig& cc = cfg.controller;
    const PassivityReport r = passivity_audit(env.energy_log(), cc.lambda_c_kg * Mat3::Identity(),
                                              cc.k_c * Mat3::Identity(), true, 1e-6, &cc.tank);
    passed += r.passed;
    tank_ok += r.tank_bounds_ok;
    completed += env.termination() == Termination::path_complete;
    worst = std::max(worst, r.max_violation_J);
  }
  return {passed == 100 && tank_ok == 100,
          fmt("audit passed %d/100, tank bounds %d/100, worst excess %.2e J, paths completed %d/100",
              passed, tank_ok, worst, completed)};
}

std::pair<bool, std::string> stress_reproduction() {
  const ScenarioConfig s = scenario("stress.json");
  auto run = [&](bool et, PassivityReport& audit, double& max_e_mm, bool& within_bound) {
    EnvConfig cfg = s.env;
    cfg.controller.et_enabled = et;
    MillingEnv env(cfg);
    StiffnessPumpPolicy pol(s.stress.k_low, s.stress.k_high, baseline_policy(cfg, s.baseline),
                            env.layout());
    run_episode(env, pol, s.seed);
    const ControllerConfig& cc = cfg.controller;
    const Mat3 lc = cc.lambda_c_kg * Mat3::Identity(), kc = cc.k_c * Mat3::Identity();
    const auto log = env.energy_log();
    audit = passivity_audit(log, lc, kc, et, 1e-6, et ? &cc.tank : nullptr);
    // Storage bounds the error: ½ λ_min(Λ_c K_c) |e|² <= W0 + H0 + Σ F_eᵀΔe.
    const double lmin = (lc * kc).selfadjointView<Eigen::Upper>().eigenvalues().minCoeff();
    const auto& r0 = log.front();
    double budget = 0.5 * r0.e_dot0.dot(lc * r0.e_dot0) + 0.5 * r0.e0.dot(lc * kc * r0.e0) +
                    (et ? r0.tank0 : 0.0);
    max_e_mm = 0.0;
    within_bound = true;
    for (const auto& r : log) {
      budget += r.f_ext.dot(r.e1 - r.e0) + 1e-6;
      if (!r.e1.allFinite()) {
        within_bound = false;
        break;
      }
      max_e_mm = std::max(max_e_mm, 1e3 * r.e1.norm());
      if (r.e1.norm() > std::sqrt(2.0 * std::max(budget, 0.0) / lmin)) within_bound = false;
    }
    return env.termination();
  };
  PassivityReport plain_audit, et_audit;
  double plain_e = 0.0, et_e = 0.0;
  bool plain_bounded = false, et_bounded = false;
  const Termination plain = run(false, plain_audit, plain_e, plain_bounded);
  const Termination et = run(true, et_audit, et_e, et_bounded);
  const bool ok = !plain_audit.passed && plain_audit.max_violation_J > 0.0 &&
                  plain == Termination::safety && et == Termination::path_complete && et_audit.passed &&
                  et_bounded;
  return {ok, fmt("plain OSC: %s, violation %.3g J, max |e| %.1f mm; ET-OSC: %s, audit %s, max |e| %.2f mm %s",
                  to_string(plain).c_str(), plain_audit.max_violation_J, plain_e, to_string(et).c_str(),
                  et_audit.passed ? "passed" : "violated", et_e,
                  et_bounded ? "within energy bound" : "exceeds energy bound")};
}

std::pair<bool, std::string> closed_loop() {
  double worst_rel = 0.0;
  for (double zeta : {0.1, 0.5, 0.9}) {
    ControllerConfig cfg;
    cfg.damping_ratio = zeta;
    EnergyTankOsc osc(cfg);
    const double w = std::sqrt(cfg.k_c), wd = w * std::sqrt(1.0 - zeta * zeta), dt = 1e-4;
    const Vec3 e0(0.004, -0.002, 0.001);
    Vec3 e = e0, ed = Vec3::Zero();
    for (int k = 1; k <= 20000; ++k) {
      const auto r = osc.step(e, ed, Vec3::Zero(), Vec3::Constant(cfg.k_c), Mat3::Zero(), dt);
      e = r.step.e;
      ed = r.step.e_dot;
      const double t = k * dt;
      const double shape = std::exp(-zeta * w * t) * (std::cos(wd * t) + zeta * w / wd * std::sin(wd * t));
      worst_rel = std::max(worst_rel, (e - e0 * shape).cwiseAbs().maxCoeff() / e0.cwiseAbs().maxCoeff());
    }
  }
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n;
  double worst_res = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    GainSchedule g;
    Mat3 a;
    for (int i = 0; i < 9; ++i) a(i) = n(rng);
    const Mat3 q = Eigen::HouseholderQR<Mat3>(a).householderQ();
    g.lambda_v = q * Vec3(n(rng), n(rng), n(rng)).cwiseAbs().cwiseMin(3.0).asDiagonal() * q.transpose() -
                 0.5 * Mat3::Identity();
    g.k_c = (100.0 + 1900.0 * std::abs(n(rng))) * Mat3::Identity();
    g.k_d = damping_from_ratio(Vec3::Constant(g.k_c(0, 0)), 0.5);
    const Vec3 e = 1e-3 * Vec3(n(rng), n(rng), n(rng)), ed = 1e-2 * Vec3(n(rng), n(rng), n(rng));
    const Vec3 f = 30.0 * Vec3(n(rng), n(rng), n(rng));
    const ControlOutput out = control_force(g, e, ed, Vec3::Zero(), f, nullptr,
                                            ControlLaw::inertia_shaping_when_undamped, g.k_d);
    const Vec3 edd = g.lambda().ldlt().solve(out.force + f);
    const Vec3 res = g.lambda_c * edd + g.lambda() * g.k_d * ed + g.lambda_c * g.k_c * e - f;
    worst_res = std::max(worst_res, res.cwiseAbs().maxCoeff());
  }
  return {worst_rel < 1e-3 && worst_res < 1e-6,
          fmt("free-space max rel err %.2e (dt 1e-4), shaped closed-loop residual %.2e N", worst_rel,
              worst_res)};
}

// ---- volume ---------------------------------------------------------------

std::pair<bool, std::string> volume_accounting() {
  GridSpec g;
  g.nx = 1201;
  g.ny = 201;
  g.dx = g.dy = 0.1;
  g.origin_x = -40.0;
  SurfaceSpec flat;
  flat.base_height_mm = 10.0;
  Heightfield h = generate(flat, g);
  ToolSpec ts;
  ts.edge_length_mm = 2.0;
  const ToolGeometry tool(ts);
  const double r = tool.radius(), d = 4.0, len = 40.0;
  const double v0 = h.volume();
  h.remove_material(tool, Vec3(20.0, 10.05, 10.0 - d), Vec3(20.0 + len, 10.05, 10.0 - d));
  const double segment = r * r * std::acos((r - d) / r) - (r - d) * std::sqrt(2.0 * r * d - d * d);
  const double analytic = ts.edge_length_mm * (len * d + segment);
  const double slot_err = std::abs(v0 - h.volume() - analytic) / analytic;

  const ScenarioConfig s = scenario("default.json");
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MillingEnv env(s.env);
    auto pol = baseline_policy(s.env, s.baseline);
    run_episode(env, *pol, seed);
    const double delta = env.initial_volume() - env.workpiece().volume();
    worst = std::max(worst, std::abs(env.mrv_total() - delta) / delta);
  }
  return {slot_err < 0.02 && worst < 0.005,
          fmt("slot rel err %.3f%%, worst episode MRV vs heightfield %.3f%% over 10 episodes",
              100 * slot_err, 100 * worst)};
}

// ---- optimisation and learning ------------------------------------------

std::pair<bool, std::string> ego_sanity() {
  int hits = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EgoConfig c;
    c.budget = 115;
    c.seed = seed;
    std::mt19937_64 rng(900 + seed);
    const Vec3 range = c.box.upper - c.box.lower;
    Vec3 peak;
    for (int k = 0; k < 3; ++k) peak[k] = c.box.lower[k] + range[k] * (0.15 + 0.7 * uniform01(rng));
    // A rigged environment: one episode whose return is a quadratic bowl.
    const EgoObjective bowl = [&](const Vec3& p) {
      return 1.0 - (p - peak).cwiseQuotient(range).squaredNorm();
    };
    const EgoResult r = ego_optimize(bowl, c);
    const double err = (r.optimum - peak).cwiseQuotient(range).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    hits += err <= 0.02;
  }
  return {hits == 10, fmt("%d/10 seeds within 2%% of box range, worst %.3f%%", hits, 100 * worst)};
}

std::pair<bool, std::string> learning_beats_baseline() {
  const ScenarioConfig s = scenario("default.json");
  EnvConfig train_env = s.env;
  train_env.record_log = false;
  CemConfig cem = s.cem;
  cem.seed = s.seed;
  const CemResult r = train_cem([&] { return std::make_unique<MillingEnv>(train_env); }, cem);
  const auto seeds = seed_range(s.compare.first_seed, s.compare.n_trials);
  auto base = baseline_policy(s.env, s.baseline);
  const auto b = evaluate_policy(s.env, *base, seeds);
  const auto p = evaluate_policy(s.env, r.mean_policy, seeds);
  const PairedOutcome t = paired_sign_test(p, b);
  const ComparisonRow pr = summarize("policy", p), br = summarize("baseline", b);
  const bool ok = t.p_value < 0.05 && pr.total.mean > br.total.mean && pr.deviation.mean < br.deviation.mean;
  return {ok, fmt("total %.3f vs baseline %.3f, wins %d/%d, p = %.2g; deviation %.3f vs %.3f",
                  pr.total.mean, br.total.mean, t.wins, t.wins + t.losses + t.ties, t.p_value,
                  pr.deviation.mean, br.deviation.mean)};
}

}  // namespace

int main() {
  criterion("chip_thickness_oracle", 1.0, chip_oracle);
  criterion("force_model_oracle", 10.0, force_oracle);
  criterion("zero_cases", 1.0, zero_cases);
  criterion("mechanistic_fit_round_trip", 30.0, fit_round_trip);
  criterion("passivity_suite", 300.0, passivity_suite);
  criterion("stress_et_vs_plain_osc", 120.0, stress_reproduction);
  criterion("closed_loop_correctness", 60.0, closed_loop);
  criterion("volume_accounting", 60.0, volume_accounting);
  criterion("ego_sanity", 300.0, ego_sanity);
  criterion("cem_beats_baseline", 7200.0, learning_beats_baseline);
  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
