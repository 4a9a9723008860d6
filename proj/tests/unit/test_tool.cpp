#include "millforge/tool.hpp"

#include "doctest.h"

#include <cmath>

using namespace millforge;

TEST_CASE("spindle speed converts rpm to rev/s once") {
  ToolSpec s;
  s.spindle_rpm = 1000.0;
  ToolGeometry t(s);
  CHECK(t.spindle_speed() == doctest::Approx(1000.0 / 60.0).epsilon(1e-15));
}

TEST_CASE("element angle offsets follow pitch and helix") {
  ToolSpec s;
  s.n_flutes = 7;
  s.n_discs = 3;
  s.pitch_rad = kTwoPi / 7.0;
  s.helix_rad = 0.3;
  s.edge_length_mm = 0.8;
  s.radius_mm = 12.0;
  ToolGeometry t(s);
  for (int f = 0; f < 7; ++f)
    for (int d = 0; d < 3; ++d) {
      const double expected = f * s.pitch_rad - (d + 0.5) * std::tan(0.3) * 0.8 / 12.0;
      CHECK(t.angle_offset(f, d) == doctest::Approx(expected).epsilon(1e-14));
      const double th = element_angle(t, 1.0, f, d);
      CHECK(th >= 0.0);
      CHECK(th < kTwoPi);
      CHECK(std::remainder(th - (1.0 + expected), kTwoPi) == doctest::Approx(0.0).epsilon(1e-12));
    }
  CHECK(t.axial_length() == doctest::Approx(2.4));
}

TEST_CASE("element frames are proper rotations") {
  for (double th : {0.0, 0.4, 1.9, 3.3, 5.9}) {
    const Mat3 r = element_frame(th).rotation_f_to_m;
    CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-14);
    CHECK(r.determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("bad tool specs are rejected") {
  ToolSpec s;
  s.radius_mm = 0.0;
  CHECK_THROWS_AS(ToolGeometry{s}, InvalidArgument);
  s = {};
  s.n_flutes = 0;
  CHECK_THROWS_AS(ToolGeometry{s}, InvalidArgument);
  s = {};
  s.enforce_uniform_pitch = true;  // 0.1257 * 50 != 2pi exactly
  CHECK_THROWS_AS(ToolGeometry{s}, InvalidArgument);
  s = {};
  s.disc_stack_sign = 0;
  CHECK_THROWS_AS(ToolGeometry{s}, InvalidArgument);
  s = {};
  CHECK_THROWS_AS(ToolGeometry(s, std::vector<double>{1.0, 2.0}), DimensionMismatch);
  ToolGeometry t(s);
  CHECK_THROWS_AS(element_angle(t, 0.0, 50, 0), OutOfBounds);
}

TEST_CASE("saw mount maps model z onto world -y") {
  const Vec3 zw = saw_mount::model_to_world() * Vec3::UnitZ();
  CHECK((zw - Vec3(0.0, -1.0, 0.0)).norm() < 1e-15);
  const Mat3 r = saw_mount::model_to_world();
  CHECK((r * saw_mount::world_to_model() - Mat3::Identity()).norm() < 1e-15);
}
