#include "millforge/policy.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace millforge;

namespace {

// Track a = 0.5 x_0 from a noisy 2-vector; ten steps per episode.
class TrackEnv : public Environment {
 public:
  VecX reset(std::uint64_t seed) override {
    rng_.seed(seed);
    n_ = 0;
    return draw();
  }
  Transition advance(const VecX& a) override {
    Transition t;
    t.reward = -std::pow(a[0] - 0.5 * obs_[0], 2);
    t.done = ++n_ >= 10;
    t.observation = draw();
    return t;
  }
  int observation_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  VecX action_low() const override { return VecX::Constant(1, -1.0); }
  VecX action_high() const override { return VecX::Constant(1, 1.0); }

 private:
  VecX draw() {
    obs_ = VecX(2);
    obs_ << 2.0 * uniform01(rng_) - 1.0, 3.0 + uniform01(rng_);
    return obs_;
  }
  std::mt19937_64 rng_;
  VecX obs_;
  int n_ = 0;
};

}  // namespace

TEST_CASE("running normalizer matches two-pass statistics") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<VecX> xs;
  RunningNormalizer r(3);
  for (int i = 0; i < 500; ++i) {
    VecX x(3);
    x << n(rng), 1e6 + n(rng), -n(rng);
    xs.push_back(x);
    r.update(x);
  }
  VecX mean = VecX::Zero(3), var = VecX::Zero(3);
  for (const auto& x : xs) mean += x;
  mean /= xs.size();
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  var /= xs.size();
  CHECK((r.mean() - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((r.variance() - var).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(r.count() == 500);

  RunningNormalizer a(3), b(3);
  for (int i = 0; i < 200; ++i) a.update(xs[i]);
  for (int i = 200; i < 500; ++i) b.update(xs[i]);
  a.merge(b);
  CHECK((a.mean() - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.variance() - var).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("normalizer clips and sanitises") {
  RunningNormalizer r(2, 5.0);
  for (int i = 0; i < 10; ++i) r.update(VecX::Constant(2, i % 2));
  r.set_frozen(true);
  VecX x(2);
  x << 1e9, std::nan("");
  const VecX y = r.normalize(x);
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 0.0);
  CHECK(r.count() == 10);
  x << -std::numeric_limits<double>::infinity(), 0.5;
  CHECK(r.apply(x)[0] == -5.0);
  CHECK(r.apply(x)[1] == doctest::Approx(0.0).scale(1e-3));
}

TEST_CASE("linear policy maps through tanh into the bounds") {
  VecX lo(2), hi(2);
  lo << -1.0, 100.0;
  hi << 3.0, 2000.0;
  LinearPolicy p(3, lo, hi);
  CHECK(p.n_params() == 8);
  VecX th(8);
  th << 0.1, -0.2, 0.3, 0.4, 0.0, 0.5, -0.7, 0.2;
  p.set_params(th);
  VecX x(3);
  x << 1.0, 2.0, -1.0;
  const VecX a = p.act(x);  // empty normaliser passes through
  for (int i = 0; i < 2; ++i) {
    const double z = th.segment(3 * i, 3).dot(x) + th[6 + i];
    CHECK(a[i] == doctest::Approx(lo[i] + (hi[i] - lo[i]) * (std::tanh(z) + 1.0) / 2.0).epsilon(1e-7));
  }
  CHECK_THROWS_AS(p.set_params(VecX::Zero(7)), DimensionMismatch);
  CHECK_THROWS_AS(p.act(VecX::Zero(2)), DimensionMismatch);
}

TEST_CASE("baseline regulator holds stiffness and drives depth") {
  EnvConfig cfg;
  auto p = baseline_policy(cfg);
  const ObsLayout l = ObsLayout::make(cfg.augmented_observation, cfg.outer_product_alignment);
  VecX obs = VecX::Zero(l.size);
  const VecX a = p->act(obs);
  CHECK(a.head<3>().isApprox(VecX::Constant(3, 800.0)));
  // Depth command pulls n_delta toward -doc: negative rate from zero.
  CHECK(a[4] < 0.0);
  obs[l.n_delta] = -5.0;
  CHECK(p->act(obs)[4] == doctest::Approx(0.0).scale(1e-9));
  CHECK(p->clone()->type() == "constant_params");
}

TEST_CASE("CEM improves a tracking task and is schedule independent") {
  CemConfig c;
  c.generations = 15;
  c.population = 32;
  c.episodes_per_eval = 2;
  c.seed = 5;
  auto make = [] { return std::make_unique<TrackEnv>(); };
  c.exec = Exec::serial;
  const CemResult s = train_cem(make, c);
  c.exec = Exec::parallel;
  const CemResult p = train_cem(make, c);
  REQUIRE(s.curve.size() == 15);
  CHECK(s.curve.back().mean > s.curve.front().mean);
  CHECK(s.curve.back().best > -0.05);
  CHECK(s.mean_policy.params() == p.mean_policy.params());
  TrackEnv env;
  LinearPolicy trained = s.mean_policy;
  LinearPolicy zero(2, env.action_low(), env.action_high());
  CHECK(run_episode(env, trained, 99).total > run_episode(env, zero, 99).total);
}

TEST_CASE("zero generations return the initial policy") {
  CemConfig c;
  c.generations = 0;
  c.population = 8;
  TrackEnv env;
  LinearPolicy init(2, env.action_low(), env.action_high());
  VecX th(3);
  th << 0.3, -0.1, 0.2;
  init.set_params(th);
  const CemResult r = train_cem([] { return std::make_unique<TrackEnv>(); }, c, &init);
  CHECK(r.mean_policy.params() == th);
  CHECK(r.curve.empty());
  c.population = 4;
  CHECK_THROWS_AS(train_cem([] { return std::make_unique<TrackEnv>(); }, c), InvalidArgument);
}
