#include "millforge/plant.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace millforge;

namespace {

// All sub-intervals, quadratic time.
double brute_worst(const std::vector<EnergyRecord>& log, const Mat3& lc, const Mat3& kc,
                   bool tank, double tol) {
  auto w = [&](const Vec3& e, const Vec3& ed, double t) {
    return 0.5 * ed.dot(lc * ed) + 0.5 * e.dot(lc * kc * e) + (tank ? t : 0.0);
  };
  double worst = 0.0;
  for (std::size_t a = 0; a < log.size(); ++a) {
    double port = 0.0;
    for (std::size_t b = a; b < log.size(); ++b) {
      port += log[b].f_ext.dot(log[b].e1 - log[b].e0);
      double dw = 0.0;
      for (std::size_t k = a; k <= b; ++k)
        dw += w(log[k].e1, log[k].e_dot1, log[k].tank1) - w(log[k].e0, log[k].e_dot0, log[k].tank0);
      worst = std::max(worst, dw - port - tol * static_cast<double>(b - a + 1));
    }
  }
  return worst;
}

Heightfield block(double height) {
  GridSpec g;
  g.nx = 1401;
  g.ny = 121;
  g.dx = g.dy = 0.1;
  g.origin_x = -40.0;
  g.origin_y = 0.0;
  return Heightfield(g, std::vector<double>(static_cast<std::size_t>(g.nx) * g.ny, height));
}

}  // namespace

TEST_CASE("passivity audit finds the worst sub-interval") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const Mat3 lc = 10.0 * Mat3::Identity(), kc = 800.0 * Mat3::Identity();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EnergyRecord> log(40);
    Vec3 e = Vec3::Zero(), ed = Vec3::Zero();
    double tank = 1.0;
    for (auto& r : log) {
      r.e0 = e;
      r.e_dot0 = ed;
      r.tank0 = tank;
      e += 1e-4 * Vec3(n(rng), n(rng), n(rng));
      ed += 1e-3 * Vec3(n(rng), n(rng), n(rng));
      tank += 1e-4 * n(rng);
      r.e1 = e;
      r.e_dot1 = ed;
      r.tank1 = tank;
      r.f_ext = Vec3(n(rng), n(rng), n(rng));
    }
    for (bool with_tank : {false, true}) {
      const PassivityReport rep = passivity_audit(log, lc, kc, with_tank, 1e-6);
      const double ref = brute_worst(log, lc, kc, with_tank, 1e-6);
      CHECK(rep.max_violation_J == doctest::Approx(ref).epsilon(1e-9).scale(1e-12));
      CHECK(rep.passed == (ref <= 0.0));
    }
  }
}

TEST_CASE("free-space plant with the tank is passive and stays bounded") {
  ControllerConfig cc;
  cc.damping_ratio = 0.1;
  MillingPlant plant(ToolGeometry{}, MaterialParams{}, cc, PlantParams{});
  plant.reset(nullptr, Vec3::Zero(), Vec3::Zero(), Vec3(3.0, -2.0, 1.0));
  std::vector<EnergyRecord> log;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> k(100.0, 2000.0);
  Vec3 kp = Vec3::Constant(800.0);
  for (int s = 0; s < 5000; ++s) {
    if (s % 20 == 0) kp = Vec3(k(rng), k(rng), k(rng));
    const Vec3 xd0(0.02 * s, 0, 0), xd1(0.02 * (s + 1), 0, 0);
    const PlantStepResult r = plant.step(xd0, xd1, kp, 1e-3);
    log.push_back({r.e0_si, r.e1_si, r.e_dot0_si, r.e_dot1_si, r.f_ext, r.control.tank_before_J,
                   r.control.tank_after_J});
    CHECK(r.safety == SafetyStatus::ok);
  }
  const PassivityReport rep = passivity_audit(log, cc.lambda_c_kg * Mat3::Identity(),
                                              cc.k_c * Mat3::Identity(), true, 1e-6, &cc.tank);
  CHECK(rep.passed);
  CHECK(rep.tank_bounds_ok);
}

TEST_CASE("chip-load removal matches the heightfield delta in a steady slot") {
  Heightfield h = block(10.0);
  ToolSpec ts;
  ts.edge_length_mm = 2.0;
  // Soft material: forces, and so tracking errors, stay negligible.
  MaterialParams m{Vec3(0.7, 0.8, 0.0), Vec3(0.008, 0.0005, 0.0)};
  PlantParams pp;
  pp.inertia_variation = 0.0;
  MillingPlant plant(ToolGeometry(ts), m, ControllerConfig{}, pp);
  const double depth = 3.0, v = 20.0, dt = 1e-3;
  const Vec3 start(-5.0, 6.05, 10.0 - depth);
  plant.reset(&h, start, Vec3(v, 0, 0));
  double mrv = 0.0, removed = 0.0;
  for (int s = 0; s < 2000; ++s) {
    const Vec3 xd0 = start + Vec3(v * dt * s, 0, 0), xd1 = start + Vec3(v * dt * (s + 1), 0, 0);
    const PlantStepResult r = plant.step(xd0, xd1, Vec3::Constant(800.0), dt);
    mrv += r.mrv_volume;
    removed += r.removed_volume;
  }
  CHECK(removed > 0.0);
  CHECK(std::abs(mrv - removed) / removed < 0.01);
  // Slot of depth d and width b advancing at v removes v*d*b per second.
  CHECK(removed == doctest::Approx(2.0 * v * depth * 2.0).epsilon(0.03));
}

TEST_CASE("pose-dependent inertia follows its formula") {
  PlantParams pp;
  pp.inertia_variation = 0.2;
  pp.inertia_wavelength_mm = 30.0;
  MillingPlant plant(ToolGeometry{}, MaterialParams{}, ControllerConfig{}, pp);
  const Vec3 x(1.0, 2.0, 4.5);
  CHECK(plant.lambda_v_at(x)(1, 1) == doctest::Approx(0.2 * 10.0 * std::sin(kTwoPi * 7.5 / 30.0)));
  CHECK(plant.lambda_v_at(x)(0, 1) == 0.0);
}

TEST_CASE("plant rejects a non-positive step") {
  MillingPlant plant(ToolGeometry{}, MaterialParams{}, ControllerConfig{}, PlantParams{});
  plant.reset(nullptr, Vec3::Zero(), Vec3::Zero());
  CHECK_THROWS_AS(plant.step(Vec3::Zero(), Vec3::Zero(), Vec3::Constant(800), 0.0), InvalidArgument);
}
