#include "millforge/gp.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace millforge;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Data {
  MatrixXd x;
  VectorXd y;
};

Data sample(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Data d{MatrixXd(n, 2), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = 10.0 * u(rng);
    d.x(i, 1) = -1.0 + 2.0 * u(rng);
    d.y[i] = std::sin(0.5 * d.x(i, 0)) + d.x(i, 1) * d.x(i, 1);
  }
  return d;
}

}  // namespace

TEST_CASE("marginal likelihood gradient matches finite differences") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd x(15, 3);
  VectorXd y(15);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    y[i] = std::cos(3 * x(i, 0)) - x(i, 1) + 0.1 * u(rng);
  }
  y = (y.array() - y.mean()).matrix();
  GpHyper h;
  h.length_scales = VectorXd(3);
  h.length_scales << 0.3, 0.7, 1.5;
  h.signal_var = 0.8;
  h.noise_var = 1e-2;
  VectorXd g;
  gp_log_marginal_likelihood(x, y, h, &g);
  REQUIRE(g.size() == 5);
  const double eps = 1e-6;
  for (int k = 0; k < 5; ++k) {
    auto shifted = [&](double s) {
      GpHyper q = h;
      if (k < 3) q.length_scales[k] *= std::exp(s);
      if (k == 3) q.signal_var *= std::exp(s);
      if (k == 4) q.noise_var *= std::exp(s);
      return gp_log_marginal_likelihood(x, y, q);
    };
    const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
    CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("near noiseless fit interpolates its data") {
  const Data d = sample(30, 3);
  GpOptions o;
  o.fixed_noise_var = 1e-8;
  const GaussianProcess gp = GaussianProcess::fit(d.x, d.y, o);
  for (int i = 0; i < 30; ++i) {
    const GpPrediction p = gp.predict(d.x.row(i).transpose());
    CHECK(p.mean == doctest::Approx(d.y[i]).epsilon(1e-3).scale(1e-3));
    CHECK(p.variance < 1e-3);
  }
  // Off-data predictions of a smooth function stay close.
  VectorXd q(2);
  q << 5.0, 0.1;
  CHECK(gp.predict_mean(q) == doctest::Approx(std::sin(2.5) + 0.01).epsilon(0.05));
}

TEST_CASE("mean gradient matches finite differences") {
  const Data d = sample(25, 4);
  const GaussianProcess gp = GaussianProcess::fit(d.x, d.y);
  VectorXd q(2);
  q << 3.3, 0.2;
  const VectorXd g = gp.mean_gradient(q);
  for (int k = 0; k < 2; ++k) {
    VectorXd a = q, b = q;
    a[k] += 1e-6;
    b[k] -= 1e-6;
    CHECK(g[k] == doctest::Approx((gp.predict_mean(a) - gp.predict_mean(b)) / 2e-6).epsilon(1e-4).scale(1e-6));
  }
}

TEST_CASE("batch predictions equal pointwise ones for both schedules") {
  const Data d = sample(20, 5);
  const GaussianProcess gp = GaussianProcess::fit(d.x, d.y);
  const Data q = sample(300, 6);
  const VectorXd s = gp.predict_mean_batch(q.x, Exec::serial);
  const VectorXd p = gp.predict_mean_batch(q.x, Exec::parallel);
  const auto full = gp.predict_batch(q.x, Exec::parallel);
  CHECK(s == p);
  for (int i = 0; i < 300; i += 37) {
    const GpPrediction r = gp.predict(q.x.row(i).transpose());
    CHECK(s[i] == doctest::Approx(r.mean).epsilon(1e-10));
    CHECK(full[i].variance == doctest::Approx(r.variance).epsilon(1e-12));
  }
}

TEST_CASE("expected improvement is non-negative and monotone in the mean") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  for (int i = 0; i < 1000; ++i) {
    GpPrediction p{n(rng), std::abs(n(rng))};
    CHECK(expected_improvement(p, n(rng)) >= 0.0);
  }
  CHECK(expected_improvement({1.0, 0.0}, 0.5) == doctest::Approx(0.5));
  CHECK(expected_improvement({0.0, 0.0}, 0.5) == 0.0);
  // Zero mean, unit variance, best 0: sigma * phi(0).
  CHECK(expected_improvement({0.0, 1.0}, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
  CHECK(expected_improvement({0.5, 1.0}, 0.0) > expected_improvement({0.2, 1.0}, 0.0));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(GaussianProcess::fit(MatrixXd::Zero(3, 2), VectorXd::Zero(4)), DimensionMismatch);
  const Data d = sample(10, 8);
  const GaussianProcess gp = GaussianProcess::fit(d.x, d.y);
  CHECK_THROWS_AS(gp.predict(VectorXd::Zero(3)), DimensionMismatch);
}
