#include "millforge/path.hpp"

#include "millforge/heightfield.hpp"

#include <algorithm>
#include <cmath>

namespace millforge {

NurbsCurve::NurbsCurve(int degree, std::vector<double> knots,
                       std::vector<Vec3> control_points, std::vector<double> weights)
    : p_(degree), knots_(std::move(knots)), ctrl_(std::move(control_points)),
      w_(std::move(weights)) {
  if (p_ < 1) throw InvalidArgument("NURBS degree must be >= 1");
  const std::size_t n = ctrl_.size();
  if (n < static_cast<std::size_t>(p_) + 1)
    throw InvalidArgument("NURBS needs at least degree+1 control points");
  if (w_.size() != n) throw DimensionMismatch("one weight per control point");
  if (knots_.size() != n + p_ + 1) throw DimensionMismatch("knot count must be n + p + 1");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (knots_[i] < knots_[i - 1]) throw InvalidArgument("knot vector must be non-decreasing");
  for (double w : w_)
    if (!(w > 0.0)) throw InvalidArgument("NURBS weights must be positive");
  if (!(u_max() > u_min())) throw InvalidArgument("empty NURBS parameter domain");
}

NurbsCurve NurbsCurve::clamped(int degree, std::vector<Vec3> control_points,
                               std::vector<double> weights) {
  const int n = static_cast<int>(control_points.size());
  if (weights.empty()) weights.assign(n, 1.0);
  std::vector<double> knots(n + degree + 1, 0.0);
  const int interior = n - degree - 1;
  for (int i = 0; i < interior; ++i)
    knots[degree + 1 + i] = static_cast<double>(i + 1) / (interior + 1);
  for (int i = n; i < n + degree + 1; ++i) knots[i] = 1.0;
  return NurbsCurve(degree, std::move(knots), std::move(control_points), std::move(weights));
}

int NurbsCurve::span(double u) const {
  const int n = static_cast<int>(ctrl_.size()) - 1;
  if (u >= knots_[n + 1]) {
    int k = n;
    while (k > p_ && knots_[k] >= knots_[n + 1]) --k;
    return k;
  }
  if (u <= knots_[p_]) {
    int k = p_;
    while (k < n && knots_[k + 1] <= u) ++k;
    return k;
  }
  const auto it = std::upper_bound(knots_.begin() + p_, knots_.begin() + n + 1, u);
  return static_cast<int>(it - knots_.begin()) - 1;
}

void NurbsCurve::evaluate(double u, Vec3& point, Vec3& derivative) const {
  u = std::clamp(u, u_min(), u_max());
  const int k = span(u);

  // Basis values and first derivatives of the p+1 non-zero functions.
  std::vector<double> left(p_ + 1), right(p_ + 1);
  std::vector<std::vector<double>> ndu(p_ + 1, std::vector<double>(p_ + 1));
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p_; ++j) {
    left[j] = u - knots_[k + 1 - j];
    right[j] = knots_[k + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double tmp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    ndu[j][j] = saved;
  }
  std::vector<double> n0(p_ + 1), n1(p_ + 1);
  for (int r = 0; r <= p_; ++r) {
    n0[r] = ndu[r][p_];
    double d = 0.0;
    if (r >= 1) d += ndu[r - 1][p_ - 1] / ndu[p_][r - 1];
    if (r <= p_ - 1) d -= ndu[r][p_ - 1] / ndu[p_][r];
    n1[r] = p_ * d;
  }

  Vec3 a = Vec3::Zero(), da = Vec3::Zero();
  double w = 0.0, dw = 0.0;
  for (int r = 0; r <= p_; ++r) {
    const int i = k - p_ + r;
    a += n0[r] * w_[i] * ctrl_[i];
    da += n1[r] * w_[i] * ctrl_[i];
    w += n0[r] * w_[i];
    dw += n1[r] * w_[i];
  }
  point = a / w;
  derivative = (da - dw * point) / w;
}

Vec3 NurbsCurve::point(double u) const {
  Vec3 c, dc;
  evaluate(u, c, dc);
  return c;
}

CutterPath::CutterPath(NurbsCurve curve, double duration_s)
    : curve_(std::move(curve)), duration_(duration_s) {
  if (!(duration_ > 0.0)) throw InvalidArgument("path duration must be positive");
}

PathSample CutterPath::eval(double t) const {
  t = std::clamp(t, 0.0, duration_);
  const double du_dt = (curve_.u_max() - curve_.u_min()) / duration_;
  Vec3 c, dc;
  curve_.evaluate(curve_.u_min() + t * du_dt, c, dc);
  PathSample s;
  s.position = c;
  s.velocity = dc * du_dt;
  const double speed = s.velocity.norm();
  if (speed < 1e-9) throw DegeneratePath("path tangent vanishes");
  const Vec3 tangent = s.velocity / speed;
  const Vec3 n = Vec3::UnitZ() - tangent.z() * tangent;
  const double nn = n.norm();
  if (nn < 1e-9) throw DegeneratePath("path tangent is vertical; normal undefined");
  s.normal = n / nn;
  return s;
}

Vec3 CutterPath::setpoint(double t, double t_delta, double n_delta) const {
  const PathSample s = eval(std::clamp(t + t_delta, 0.0, duration_));
  return s.position + n_delta * s.normal;
}

CutterPath surface_following_path(const Heightfield& surface, double y, double x0,
                                  double x1, double speed_mm_s, double spacing_mm) {
  if (!(x1 > x0)) throw InvalidArgument("path must run along +x");
  if (!(speed_mm_s > 0.0) || !(spacing_mm > 0.0))
    throw InvalidArgument("path speed and spacing must be positive");
  const int segments = std::max(3, static_cast<int>(std::ceil((x1 - x0) / spacing_mm)));
  std::vector<Vec3> pts;
  pts.reserve(segments + 1);
  for (int k = 0; k <= segments; ++k) {
    const double x = x0 + (x1 - x0) * k / segments;
    pts.emplace_back(x, y, surface.height(x, y));
  }
  // Arc length of the control polygon is close enough for a nominal speed.
  double length = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) length += (pts[k] - pts[k - 1]).norm();
  return CutterPath(NurbsCurve::clamped(3, std::move(pts)), length / speed_mm_s);
}

}  // namespace millforge
