#include "millforge/bridge.hpp"
#include "millforge/config.hpp"
#include "millforge/evaluate.hpp"
#include "millforge/io.hpp"

#include "CLI11.hpp"

#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <thread>

using namespace millforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSafety = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

ScenarioConfig load(const Common& c) {
  ScenarioConfig s = c.config.empty() ? parse_scenario(json::object()) : load_scenario(c.config);
  if (c.seed) s.seed = *c.seed;
  return s;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream o(file);
  if (!o) throw Error("cannot write " + file.string());
  o << j.dump(2) << '\n';
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

json breakdown_json(const RewardBreakdown& r) {
  return {{"time", r.time_term},
          {"deviation", r.deviation_term},
          {"mrv", r.mrv_term},
          {"force", r.force_term},
          {"total", r.total}};
}

json row_json(const ComparisonRow& r) {
  auto ms = [](const MeanStderr& m, int n) {
    return json{{"mean", m.mean}, {"stderr", n > 1 ? json(m.stderr_) : json(nullptr)}};
  };
  return {{"policy", r.name},
          {"n", r.n},
          {"time", ms(r.time, r.n)},
          {"deviation", ms(r.deviation, r.n)},
          {"mrv", ms(r.mrv, r.n)},
          {"force", ms(r.force, r.n)},
          {"total", ms(r.total, r.n)},
          {"safety_terminations", r.safety_terminations}};
}

ProcessParams ego_params(const fs::path& file) {
  const json j = read_json(file);
  if (!j.contains("optimum") || !j["optimum"].is_object()) throw ConfigError(file.string() + ": missing optimum");
  const json& o = j["optimum"];
  ProcessParams p;
  try {
    p.feed_mm_s = o.at("feed_mm_per_s").get<double>();
    p.doc_mm = o.at("rdoc_mm").get<double>();
    p.stiffness = o.at("stiffness_per_s2").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------

struct RolloutOpts {
  std::string policy_file;
  std::string kind = "baseline";
  std::optional<bool> et;
  std::optional<double> zeta;
};

int cmd_rollout(const Common& c, const RolloutOpts& o) {
  ScenarioConfig s = load(c);
  if (o.et) s.env.controller.et_enabled = *o.et;
  if (o.zeta) s.env.controller.damping_ratio = *o.zeta;
  s.env.record_log = true;
  try {
    s.env.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  MillingEnv env(s.env);
  std::unique_ptr<Policy> policy;
  if (!o.policy_file.empty()) {
    policy = load_policy(o.policy_file, s.env);
  } else if (o.kind == "baseline") {
    policy = baseline_policy(s.env, s.baseline);
  } else if (o.kind == "stress") {
    policy = std::make_unique<StiffnessPumpPolicy>(s.stress.k_low, s.stress.k_high,
                                                   baseline_policy(s.env, s.baseline), env.layout());
  } else if (o.kind == "random") {
    policy = std::make_unique<RandomStiffnessPolicy>(s.seed, 5, s.stress.k_low, s.stress.k_high,
                                                     baseline_policy(s.env, s.baseline));
  } else {
    throw ConfigError("unknown policy kind '" + o.kind + "'");
  }
  spdlog::info("rollout: policy {}, seed {}, zeta {}, et {}", policy->type(), s.seed,
               s.env.controller.damping_ratio, s.env.controller.et_enabled);
  const EpisodeResult r = run_episode(env, *policy, s.seed);
  const ControllerConfig& cc = s.env.controller;
  const PassivityReport audit =
      passivity_audit(env.energy_log(), cc.lambda_c_kg * Mat3::Identity(), cc.k_c * Mat3::Identity(),
                      cc.et_enabled, 1e-6, cc.et_enabled ? &cc.tank : nullptr);
  const fs::path out(c.out);
  write_trajectory(out / "trajectory.csv", env.log());
  json report = {{"seed", s.seed},
                 {"policy", policy->type()},
                 {"steps", r.steps},
                 {"termination", to_string(env.termination())},
                 {"reward", breakdown_json(env.episode_reward())},
                 {"mrv_total_mm3", env.mrv_total()},
                 {"removed_total_mm3", env.removed_total()},
                 {"damping_ratio", cc.damping_ratio},
                 {"et_enabled", cc.et_enabled},
                 {"passivity_audit",
                  {{"passed", audit.passed},
                   {"max_violation_J", audit.max_violation_J},
                   {"max_step_excess_J", audit.max_step_excess_J},
                   {"tank_bounds_ok", audit.tank_bounds_ok},
                   {"steps", audit.steps}}}};
  write_json(out / "episode.json", report);
  spdlog::info("rollout: {} after {} steps, total {:.4f}, audit {}", to_string(env.termination()),
               r.steps, env.episode_reward().total, audit.passed ? "passed" : "violated");
  return env.termination() == Termination::safety ? kExitSafety : kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareOpts {
  std::vector<std::string> strategies;
  std::string policy_file;
  std::string ego_result;
  double doc_offset_mm = 1.0;
  std::optional<int> n_trials;
};

int cmd_compare(const Common& c, const CompareOpts& o) {
  ScenarioConfig s = load(c);
  const int n = o.n_trials.value_or(s.compare.n_trials);
  if (n < 1) throw ConfigError("n-trials must be >= 1");
  std::vector<std::string> strategies = o.strategies;
  if (strategies.empty()) {
    strategies.push_back("baseline");
    if (!o.policy_file.empty()) {
      strategies.push_back("policy");
      strategies.push_back("policy+doc-offset");
    }
    if (!o.ego_result.empty()) strategies.push_back("ego");
  }
  const auto seeds = seed_range(c.seed ? *c.seed : s.compare.first_seed, n);
  std::vector<ComparisonRow> rows;
  std::vector<std::vector<EpisodeSummary>> all;
  for (const auto& name : strategies) {
    EnvConfig env = s.env;
    std::unique_ptr<Policy> policy;
    if (name == "baseline") {
      policy = baseline_policy(env, s.baseline);
    } else if (name == "policy" || name == "policy+doc-offset") {
      if (o.policy_file.empty()) throw ConfigError("strategy '" + name + "' needs --policy");
      if (name == "policy+doc-offset") env.doc_offset_mm = o.doc_offset_mm;
      policy = load_policy(o.policy_file, env);
    } else if (name == "ego") {
      if (o.ego_result.empty()) throw ConfigError("strategy 'ego' needs --ego-result");
      policy = baseline_policy(env, ego_params(o.ego_result));
    } else {
      throw ConfigError("unknown strategy '" + name + "'");
    }
    spdlog::info("compare: {} over {} seeds", name, n);
    all.push_back(evaluate_policy(env, *policy, seeds));
    rows.push_back(summarize(name, all.back()));
  }
  const fs::path out(c.out);
  write_comparison_table(out / "compare.csv", rows);
  {
    fs::create_directories(out);
    std::ofstream t(out / "compare_trials.csv");
    if (!t) throw Error("cannot write compare_trials.csv");
    t << std::setprecision(17) << "policy,seed,time,deviation,mrv,force,total,termination\n";
    for (std::size_t k = 0; k < strategies.size(); ++k)
      for (const auto& e : all[k])
        t << strategies[k] << ',' << e.seed << ',' << e.reward.time_term << ','
          << e.reward.deviation_term << ',' << e.reward.mrv_term << ',' << e.reward.force_term << ','
          << e.reward.total << ',' << to_string(e.termination) << '\n';
  }
  json j = {{"seeds", seeds}, {"strategies", json::array()}};
  for (const auto& r : rows) j["strategies"].push_back(row_json(r));
  if (strategies.size() >= 2 && strategies[0] == "baseline") {
    json tests = json::array();
    for (std::size_t k = 1; k < strategies.size(); ++k) {
      const PairedOutcome p = paired_sign_test(all[k], all[0]);
      tests.push_back({{"policy", strategies[k]}, {"against", "baseline"}, {"wins", p.wins},
                       {"losses", p.losses}, {"ties", p.ties}, {"p_value", p.p_value}});
    }
    j["sign_tests"] = tests;
  }
  write_json(out / "compare.json", j);
  int safety = 0;
  for (const auto& r : rows) {
    spdlog::info("compare: {:<18} total {:.4f} ± {:.4f}, deviation {:.4f}", r.name, r.total.mean,
                 r.total.stderr_, r.deviation.mean);
    safety += r.safety_terminations;
  }
  return safety > 0 ? kExitSafety : kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::optional<int> generations;
  std::optional<int> population;
  std::string init_policy;
  bool serial = false;
};

int cmd_train(const Common& c, const TrainOpts& o) {
  ScenarioConfig s = load(c);
  CemConfig cem = s.cem;
  if (o.generations) cem.generations = *o.generations;
  if (o.population) cem.population = *o.population;
  if (o.serial) cem.exec = Exec::serial;
  cem.seed = s.seed;
  try {
    cem.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  EnvConfig env = s.env;
  env.record_log = false;
  std::unique_ptr<LinearPolicy> init;
  if (!o.init_policy.empty()) {
    auto p = load_policy(o.init_policy, env);
    auto* lin = dynamic_cast<LinearPolicy*>(p.get());
    if (!lin) throw ConfigError("--init must be a linear policy");
    init = std::make_unique<LinearPolicy>(*lin);
  }
  spdlog::info("train: CEM {} generations x {} candidates", cem.generations, cem.population);
  const CemResult r = train_cem([&] { return std::make_unique<MillingEnv>(env); }, cem, init.get());
  const fs::path out(c.out);
  write_learning_curve(out / "learning_curve.csv", r.curve);
  save_policy(out / "policy.json", r.mean_policy);
  save_policy(out / "policy_best.json", r.best);
  if (!r.curve.empty())
    spdlog::info("train: last generation mean {:.4f}, best {:.4f}", r.curve.back().mean,
                 r.curve.back().best);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EgoOpts {
  std::optional<int> budget;
};

int cmd_ego(const Common& c, const EgoOpts& o) {
  ScenarioConfig s = load(c);
  EgoConfig cfg = s.ego.optimizer;
  if (o.budget) cfg.budget = *o.budget;
  cfg.seed = s.seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  RolloutObjective objective{s.env, s.ego.episode_seed, s.ego.safety_penalty};
  objective.env.record_log = false;
  spdlog::info("ego: budget {}", cfg.budget);
  const EgoResult r = ego_optimize([&](const Vec3& p) { return objective(p); }, cfg);
  const fs::path out(c.out);
  write_ego_history(out / "ego_history.csv", r.history);
  write_partial_dependence(out / "ego_partial_dependence.csv", r.partial_dependence);
  const GpHyper& h = r.surrogate.hyper();
  json ls = json::array();
  for (Eigen::Index k = 0; k < h.length_scales.size(); ++k) ls.push_back(h.length_scales[k]);
  write_json(out / "ego_result.json",
             {{"optimum",
               {{"feed_mm_per_s", r.optimum[0]},
                {"rdoc_mm", r.optimum[1]},
                {"stiffness_per_s2", r.optimum[2]}}},
              {"optimum_mean", r.optimum_mean},
              {"rollouts", r.history.size()},
              {"surrogate",
               {{"length_scales_unit", ls},
                {"signal_var", h.signal_var},
                {"noise_var", h.noise_var},
                {"log_marginal_likelihood", r.surrogate.log_marginal_likelihood()}}}});
  spdlog::info("ego: optimum feed {:.3f} mm/s, rdoc {:.3f} mm, stiffness {:.1f}", r.optimum[0],
               r.optimum[1], r.optimum[2]);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitOpts {
  std::string log;
  bool synthesize = false;
  double noise_sigma = 0.0;
  int revolutions = 10;
  double rdoc_mm = 13.72;
};

int cmd_fit(const Common& c, const FitOpts& o) {
  ScenarioConfig s = load(c);
  const fs::path out(c.out);
  ForceLog log;
  if (o.synthesize) {
    SyntheticLogSpec spec;
    spec.meta.tool = s.env.tool;
    spec.meta.rdoc_mm = o.rdoc_mm;
    spec.meta.spindle_angle0 = 0.0137;
    if (!s.env.fixed_material) throw ConfigError("--synthesize needs a material block");
    spec.material = *s.env.fixed_material;
    spec.revolutions_per_feed = o.revolutions;
    spec.noise_sigma = o.noise_sigma;
    spec.bias = Vec3(1.0, 2.0, 3.0);
    spec.seed = s.seed;
    log = synthetic_force_log(spec);
    write_force_log(out / "force_log.csv", log);
    spdlog::info("fit: wrote synthetic log with {} records", log.records.size());
  } else {
    if (o.log.empty()) throw ConfigError("fit needs --log or --synthesize");
    log = read_force_log(o.log);
  }
  const ForceLog corrected = bias_correct(log);
  const FitResult r = fit_constants(corrected, s.fit);
  write_json(out / "fit_report.json", fit_report(r));
  spdlog::info("fit: Kc = ({:.4g}, {:.4g}, {:.4g}), Ke = ({:.4g}, {:.4g}, {:.4g}), rmse {:.4f} N",
               r.material.kc[0], r.material.kc[1], r.material.kc[2], r.material.ke[0],
               r.material.ke[1], r.material.ke[2], r.rmse);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenOpts {
  int nx = 256;
  int ny = 64;
  double dx_mm = 0.5;
};

int cmd_gen_workpiece(const Common& c, const GenOpts& o) {
  ScenarioConfig s = load(c);
  SurfaceSpec surface;
  if (s.env.fixed_surface) {
    surface = *s.env.fixed_surface;
  } else {
    std::mt19937_64 rng(s.seed);
    surface = s.env.randomization.sample_surface(rng);
  }
  GridSpec g;
  g.nx = o.nx;
  g.ny = o.ny;
  g.dx = g.dy = o.dx_mm;
  try {
    g.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const Heightfield h = generate(surface, g);
  json j = heightfield_to_json(h);
  j["surface_family"] = to_string(surface.family);
  write_json(fs::path(c.out) / "workpiece.json", j);
  spdlog::info("gen-workpiece: {} surface, {}x{} nodes, volume {:.1f} mm^3", to_string(surface.family),
               g.nx, g.ny, h.volume());
  return kExitOk;
}

// ---------------------------------------------------------------------------

volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int) { g_stop = 1; }

struct ServeOpts {
  std::string host = "127.0.0.1";
  int port = kDefaultBridgePort;
};

int cmd_serve(const Common& c, const ServeOpts& o) {
  ScenarioConfig s = load(c);
  s.env.record_log = false;
  BridgeServer server(s.env, o.host, o.port);
  server.start();
  spdlog::info("serve-env: listening on {}:{}", o.host, server.port());
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

void setup_logging() {
  const char* lvl = std::getenv("MILLFORGE_LOG_LEVEL");
  spdlog::set_level(lvl ? spdlog::level::from_str(lvl) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"millforge: milling simulation, control and learning harness"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Scenario JSON file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Seed (overrides the scenario seed)");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };

  RolloutOpts ro;
  auto* rollout = app.add_subcommand("rollout", "Run one episode and audit passivity");
  add_common(rollout);
  rollout->add_option("--policy", ro.policy_file, "Policy JSON file");
  rollout->add_option("--kind", ro.kind, "Built-in policy when no file is given")
      ->check(CLI::IsMember({"baseline", "stress", "random"}))
      ->capture_default_str();
  rollout->add_flag("--et,!--no-et", ro.et, "Energy tank on or off");
  rollout->add_option("--damping-ratio", ro.zeta, "Controller damping ratio");

  CompareOpts co;
  auto* compare = app.add_subcommand("compare", "Compare strategies over shared seeds");
  add_common(compare);
  compare->add_option("--strategies", co.strategies, "baseline, policy, policy+doc-offset, ego");
  compare->add_option("--policy", co.policy_file, "Policy JSON file");
  compare->add_option("--ego-result", co.ego_result, "ego_result.json from the ego command");
  compare->add_option("--doc-offset-mm", co.doc_offset_mm, "Depth offset for policy+doc-offset")
      ->capture_default_str();
  compare->add_option("--n-trials", co.n_trials, "Trials per strategy");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Train a linear policy with CEM");
  add_common(train);
  train->add_option("--generations", to.generations);
  train->add_option("--population", to.population);
  train->add_option("--init", to.init_policy, "Initial linear policy JSON");
  train->add_flag("--serial", to.serial, "Serial evaluation");

  EgoOpts eo;
  auto* ego = app.add_subcommand("ego", "Bayesian optimisation of constant process parameters");
  add_common(ego);
  ego->add_option("--budget", eo.budget, "Number of rollouts");

  FitOpts fo;
  auto* fit = app.add_subcommand("fit", "Fit cutting constants to a force log");
  add_common(fit);
  fit->add_option("--log", fo.log, "Force log CSV (with .meta.json sidecar)");
  fit->add_flag("--synthesize", fo.synthesize, "Generate a synthetic log from the scenario first");
  fit->add_option("--noise-sigma", fo.noise_sigma, "Synthetic force noise (N)");
  fit->add_option("--revolutions", fo.revolutions, "Synthetic revolutions per feed");
  fit->add_option("--rdoc-mm", fo.rdoc_mm, "Synthetic radial depth of cut");

  GenOpts go;
  auto* gen = app.add_subcommand("gen-workpiece", "Write a workpiece heightfield");
  add_common(gen);
  gen->add_option("--nx", go.nx)->capture_default_str();
  gen->add_option("--ny", go.ny)->capture_default_str();
  gen->add_option("--dx-mm", go.dx_mm)->capture_default_str();

  ServeOpts so;
  auto* serve = app.add_subcommand("serve-env", "Serve the environment over TCP");
  add_common(serve);
  serve->add_option("--host", so.host)->capture_default_str();
  serve->add_option("--port", so.port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*rollout) return cmd_rollout(common, ro);
    if (*compare) return cmd_compare(common, co);
    if (*train) return cmd_train(common, to);
    if (*ego) return cmd_ego(common, eo);
    if (*fit) return cmd_fit(common, fo);
    if (*gen) return cmd_gen_workpiece(common, go);
    if (*serve) return cmd_serve(common, so);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    spdlog::error("invalid argument: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
