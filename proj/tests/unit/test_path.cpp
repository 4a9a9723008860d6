#include "millforge/heightfield.hpp"
#include "millforge/path.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace millforge;

namespace {

// Cox-de Boor recursion, the textbook definition.
double basis(const std::vector<double>& u, int i, int p, double t) {
  if (p == 0) {
    const bool last = (t == u.back()) && u[i] < u[i + 1] && u[i + 1] == u.back();
    return ((u[i] <= t && t < u[i + 1]) || last) ? 1.0 : 0.0;
  }
  double a = 0.0, b = 0.0;
  if (u[i + p] > u[i]) a = (t - u[i]) / (u[i + p] - u[i]) * basis(u, i, p - 1, t);
  if (u[i + p + 1] > u[i + 1]) b = (u[i + p + 1] - t) / (u[i + p + 1] - u[i + 1]) * basis(u, i + 1, p - 1, t);
  return a + b;
}

Vec3 oracle_point(const NurbsCurve& c, double t) {
  Vec3 num = Vec3::Zero();
  double den = 0.0;
  for (std::size_t i = 0; i < c.control_points().size(); ++i) {
    const double n = basis(c.knots(), static_cast<int>(i), c.degree(), t) * c.weights()[i];
    num += n * c.control_points()[i];
    den += n;
  }
  return num / den;
}

}  // namespace

TEST_CASE("rational curve points match the Cox-de Boor definition") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int deg = 1; deg <= 4; ++deg) {
    std::vector<Vec3> pts;
    std::vector<double> w;
    for (int k = 0; k < 9; ++k) {
      pts.emplace_back(10 * u(rng), 10 * u(rng), 10 * u(rng));
      w.push_back(0.3 + 2.0 * u(rng));
    }
    const NurbsCurve c = NurbsCurve::clamped(deg, pts, w);
    for (int k = 0; k <= 50; ++k) {
      const double t = c.u_min() + (c.u_max() - c.u_min()) * k / 50.0;
      CHECK((c.point(t) - oracle_point(c, t)).norm() < 1e-10);
    }
    CHECK((c.point(c.u_min()) - pts.front()).norm() < 1e-12);
    CHECK((c.point(c.u_max()) - pts.back()).norm() < 1e-12);
  }
}

TEST_CASE("curve derivative matches central differences") {
  const NurbsCurve c = NurbsCurve::clamped(
      3, {Vec3(0, 0, 0), Vec3(1, 2, 0), Vec3(3, 1, 1), Vec3(4, 4, 2), Vec3(6, 3, 0)},
      {1.0, 0.5, 2.0, 1.0, 1.5});
  for (double t : {0.05, 0.3, 0.5, 0.77, 0.95}) {
    Vec3 p, d;
    c.evaluate(t, p, d);
    const double h = 1e-6;
    const Vec3 fd = (c.point(t + h) - c.point(t - h)) / (2 * h);
    CHECK((d - fd).norm() < 1e-6 * (1.0 + d.norm()));
  }
}

TEST_CASE("curve construction is validated") {
  CHECK_THROWS_AS(NurbsCurve::clamped(3, {Vec3::Zero(), Vec3::UnitX()}), InvalidArgument);
  CHECK_THROWS_AS(NurbsCurve::clamped(1, {Vec3::Zero(), Vec3::UnitX()}, {1.0}), DimensionMismatch);
  CHECK_THROWS_AS(NurbsCurve::clamped(1, {Vec3::Zero(), Vec3::UnitX()}, {1.0, -1.0}), InvalidArgument);
  CHECK_THROWS_AS(NurbsCurve(1, {0, 1, 0.5, 1}, {Vec3::Zero(), Vec3::UnitX()}, {1, 1}), InvalidArgument);
}

TEST_CASE("cutter path scales the parameter to time") {
  const NurbsCurve c = NurbsCurve::clamped(1, {Vec3(0, 0, 0), Vec3(100, 0, 0)});
  const CutterPath p(c, 5.0);
  const PathSample s = p.eval(2.5);
  CHECK((s.position - Vec3(50, 0, 0)).norm() < 1e-12);
  CHECK((s.velocity - Vec3(20, 0, 0)).norm() < 1e-12);
  CHECK((s.normal - Vec3::UnitZ()).norm() < 1e-12);
  CHECK((p.setpoint(1.0, 0.5, -2.0) - Vec3(30, 0, -2)).norm() < 1e-12);
  // Clamped to the end of the path.
  CHECK((p.eval(9.0).position - Vec3(100, 0, 0)).norm() < 1e-12);
}

TEST_CASE("path normals are unit and perpendicular to the tangent") {
  const NurbsCurve c = NurbsCurve::clamped(3, {Vec3(0, 0, 0), Vec3(10, 0, 3), Vec3(20, 1, -2), Vec3(30, 0, 0)});
  const CutterPath p(c, 3.0);
  for (double t = 0.0; t <= 3.0; t += 0.25) {
    const PathSample s = p.eval(t);
    CHECK(s.normal.norm() == doctest::Approx(1.0));
    CHECK(std::abs(s.normal.dot(s.velocity)) < 1e-9 * s.velocity.norm());
    CHECK(s.normal.z() > 0.0);
  }
}

TEST_CASE("degenerate paths are reported") {
  const NurbsCurve still = NurbsCurve::clamped(1, {Vec3(1, 1, 1), Vec3(1, 1, 1)});
  CHECK_THROWS_AS(CutterPath(still, 1.0).eval(0.5), DegeneratePath);
  const NurbsCurve vertical = NurbsCurve::clamped(1, {Vec3(0, 0, 0), Vec3(0, 0, 5)});
  CHECK_THROWS_AS(CutterPath(vertical, 1.0).eval(0.5), DegeneratePath);
  CHECK_THROWS_AS(CutterPath(still, 0.0), InvalidArgument);
}

TEST_CASE("surface following path hugs a flat surface at the nominal speed") {
  SurfaceSpec s;
  s.base_height_mm = 4.0;
  GridSpec g;
  g.nx = 300;
  g.ny = 40;
  g.dx = g.dy = 0.5;
  const Heightfield h = generate(s, g);
  const CutterPath p = surface_following_path(h, 10.0, 20.0, 120.0, 20.0);
  CHECK(p.duration() == doctest::Approx(5.0));
  for (double t = 0.0; t <= 5.0; t += 0.5) {
    const PathSample q = p.eval(t);
    CHECK(q.position.z() == doctest::Approx(4.0));
    CHECK(q.position.y() == doctest::Approx(10.0));
  }
  CHECK_THROWS_AS(surface_following_path(h, 10.0, 50.0, 20.0, 20.0), InvalidArgument);
}
