// Serial reference vs OpenMP schedule for each parallel kernel.
#include "millforge/cutting.hpp"
#include "millforge/evaluate.hpp"
#include "millforge/gp.hpp"
#include "millforge/heightfield.hpp"
#include "millforge/policy.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace millforge;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

void bm_generate_surface(benchmark::State& state) {
  SurfaceSpec s;
  s.family = SurfaceFamily::fractal;
  s.octaves = 6;
  GridSpec g;
  g.nx = 1024;
  g.ny = 256;
  g.dx = g.dy = 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(generate(s, g, exec_of(state)).hash());
}
BENCHMARK(bm_generate_surface)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void bm_revolution_average(benchmark::State& state) {
  ToolSpec ts;
  ts.n_flutes = 100;
  ts.pitch_rad = kTwoPi / 100;
  ts.n_discs = 4;
  const ToolGeometry tool(ts);
  const MaterialParams m{Vec3(700, 800, 0.03), Vec3(8, 0.5, -0.01)};
  FeedState f;
  f.velocity_world = Vec3(20, 0, 0);
  f.world_to_model = saw_mount::world_to_model();
  auto engage = [&](double a) { return immersion_engagement(tool, a, 8.0); };
  for (auto _ : state)
    benchmark::DoNotOptimize(revolution_average_force(tool, m, f, engage, 3600, {}, exec_of(state)));
}
BENCHMARK(bm_revolution_average)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void bm_gp_predict_mean(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(115, 3), q(20000, 3);
  Eigen::VectorXd y(115);
  for (int i = 0; i < 115; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    y[i] = std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 2);
  }
  for (int i = 0; i < q.size(); ++i) q(i) = u(rng);
  GpOptions o;
  o.restarts = 1;
  const GaussianProcess gp = GaussianProcess::fit(x, y, o);
  for (auto _ : state) benchmark::DoNotOptimize(gp.predict_mean_batch(q, exec_of(state)));
}
BENCHMARK(bm_gp_predict_mean)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void bm_evaluate_policy(benchmark::State& state) {
  EnvConfig cfg;
  cfg.path_length_mm = 40.0;
  auto pol = baseline_policy(cfg);
  const auto seeds = seed_range(0, 4);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_policy(cfg, *pol, seeds, exec_of(state)));
}
BENCHMARK(bm_evaluate_policy)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
