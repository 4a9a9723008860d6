#include "millforge/osc.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace millforge;

namespace {

Mat3 random_spd(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), s(lo, hi);
  Mat3 a;
  for (int i = 0; i < 9; ++i) a(i) = u(rng);
  Eigen::HouseholderQR<Mat3> qr(a);
  const Mat3 q = qr.householderQ();
  return q * Vec3(s(rng), s(rng), s(rng)).asDiagonal() * q.transpose();
}

// Underdamped e'' + 2 zeta w e' + w^2 e = 0 from e(0) = e0, e'(0) = 0.
double analytic(double e0, double w, double zeta, double t) {
  const double wd = w * std::sqrt(1.0 - zeta * zeta);
  return e0 * std::exp(-zeta * w * t) * (std::cos(wd * t) + zeta * w / wd * std::sin(wd * t));
}

}  // namespace

TEST_CASE("free-space constant-gain response matches the second-order solution") {
  for (double zeta : {0.1, 0.5, 0.9}) {
    ControllerConfig cfg;
    cfg.damping_ratio = zeta;
    EnergyTankOsc osc(cfg);
    const double w = std::sqrt(cfg.k_c);
    const double dt = 1e-4;
    const Vec3 e0(0.004, -0.002, 0.001);
    Vec3 e = e0, ed = Vec3::Zero();
    double worst = 0.0;
    for (int k = 1; k <= 20000; ++k) {
      const auto r = osc.step(e, ed, Vec3::Zero(), Vec3::Constant(cfg.k_c), Mat3::Zero(), dt);
      e = r.step.e;
      ed = r.step.e_dot;
      for (int i = 0; i < 3; ++i)
        worst = std::max(worst, std::abs(e[i] - analytic(e0[i], w, zeta, k * dt)) / e0.cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("inertia shaping law yields the shaped closed loop") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    GainSchedule g;
    g.lambda_c = 10.0 * Mat3::Identity();
    g.lambda_v = random_spd(rng, 0.1, 2.0) - 0.05 * Mat3::Identity();
    g.k_c = 800.0 * Mat3::Identity();
    g.k_v = Mat3::Zero();
    g.k_d = damping_from_ratio(Vec3::Constant(800.0), 0.7);
    const Vec3 e(n(rng) * 1e-3, n(rng) * 1e-3, n(rng) * 1e-3);
    const Vec3 ed(n(rng) * 1e-2, n(rng) * 1e-2, n(rng) * 1e-2);
    const Vec3 f(n(rng) * 30, n(rng) * 30, n(rng) * 30);
    const ControlOutput out = control_force(g, e, ed, Vec3::Zero(), f, nullptr,
                                            ControlLaw::inertia_shaping_when_undamped, g.k_d);
    CHECK(out.law_used == LawUsed::inertia_shaping);
    // Plant error dynamics: Λ ë = F_c + F_ext.
    const Vec3 edd = g.lambda().ldlt().solve(out.force + f);
    const Vec3 residual = g.lambda_c * edd + g.lambda() * (g.k_d * ed) + g.lambda_c * (g.k_c * e) - f;
    worst = std::max(worst, residual.cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("injection term follows its definition") {
  GainSchedule g;
  g.lambda_v = Vec3(0.5, -0.2, 0.1).asDiagonal();
  g.k_v = Vec3(100, 200, -50).asDiagonal();
  const Vec3 e(1e-3, -2e-3, 3e-4), edd(0.2, 0.1, -0.3);
  const Vec3 w = w_of_t(g, e, edd);
  const Vec3 ref = -g.lambda_v * g.k_c * e - (g.lambda_c + g.lambda_v) * g.k_v * e - g.lambda_v * edd;
  CHECK((w - ref).norm() < 1e-14);
  GainSchedule z;
  CHECK(w_of_t(z, e, edd).norm() == 0.0);
}

TEST_CASE("damping from ratio") {
  const Mat3 kd = damping_from_ratio(Vec3(100, 400, 900), 0.5);
  CHECK(kd(0, 0) == doctest::Approx(10.0));
  CHECK(kd(1, 1) == doctest::Approx(20.0));
  CHECK(kd(2, 2) == doctest::Approx(30.0));
  CHECK(kd(0, 1) == 0.0);
}

TEST_CASE("gain validation rejects non-SPD inertia and stiffness") {
  GainSchedule g;
  CHECK_NOTHROW(g.validate());
  g.lambda_c(0, 0) = -1.0;
  CHECK_THROWS_AS(g.validate(), NonSPDGains);
  g = {};
  g.lambda_v = -20.0 * Mat3::Identity();
  CHECK_THROWS_AS(g.validate(), NonSPDGains);
  g = {};
  g.k_v = -1000.0 * Mat3::Identity();
  CHECK_THROWS_AS(g.validate(), NonSPDGains);
  g = {};
  g.k_c(0, 1) = 5.0;
  CHECK_THROWS_AS(g.validate(), NonSPDGains);
}

TEST_CASE("tank energy stays within its bounds and falls back when empty") {
  ControllerConfig cfg;
  cfg.damping_ratio = 0.05;
  cfg.tank.init_J = 0.02;
  EnergyTankOsc osc(cfg);
  Vec3 e(0.01, 0.0, 0.0), ed = Vec3::Zero();
  int fallbacks = 0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> k(100.0, 2000.0);
  for (int s = 0; s < 20000; ++s) {
    const Vec3 kp(k(rng), k(rng), k(rng));
    const Mat3 lv = Vec3(0.5, -0.3, 0.2).asDiagonal();
    const auto r = osc.step(e, ed, Vec3::Zero(), kp, lv, 1e-3);
    e = r.step.e;
    ed = r.step.e_dot;
    if (r.law == LawUsed::fallback) ++fallbacks;
    CHECK(osc.tank().energy >= cfg.tank.floor_J - 1e-12);
    CHECK(osc.tank().energy <= cfg.tank.max_J + 1e-9);
  }
  CHECK(fallbacks > 0);
  CHECK(e.allFinite());
}

TEST_CASE("law names round-trip") {
  for (auto l : {ControlLaw::full, ControlLaw::inertia_shaping_when_undamped})
    CHECK(control_law_from_string(to_string(l)) == l);
  CHECK_THROWS_AS(control_law_from_string("other"), InvalidArgument);
}

TEST_CASE("tank config validation") {
  TankConfig t;
  CHECK_NOTHROW(t.validate());
  t.init_J = 100.0;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
  t = {};
  t.floor_J = 0.0;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
}
