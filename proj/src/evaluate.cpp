#include "millforge/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>

namespace millforge {

namespace {

EpisodeSummary run_one(MillingEnv& env, Policy& policy, std::uint64_t seed) {
  EpisodeSummary s;
  s.seed = seed;
  policy.reset();
  VecX obs = env.reset(seed);
  const int e0 = env.layout().e;
  while (true) {
    const EnvStep st = env.step(policy.act(obs));
    obs = st.observation;
    ++s.steps;
    s.max_error_mm = std::max(s.max_error_mm, obs.segment<3>(e0).norm());
    if (st.done) break;
  }
  s.reward = env.episode_reward();
  s.termination = env.termination();
  return s;
}

}  // namespace

std::vector<std::uint64_t> seed_range(std::uint64_t first, int n) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(first + static_cast<std::uint64_t>(i));
  return s;
}

std::vector<EpisodeSummary> evaluate_policy(const EnvConfig& cfg, const Policy& policy,
                                            const std::vector<std::uint64_t>& seeds, Exec exec) {
  EnvConfig c = cfg;
  c.record_log = false;
  c.validate();
  std::vector<EpisodeSummary> out(seeds.size());
  const long n = static_cast<long>(seeds.size());
  if (exec == Exec::serial) {
    MillingEnv env(c);
    auto p = policy.clone();
    for (long i = 0; i < n; ++i) out[i] = run_one(env, *p, seeds[i]);
    return out;
  }
  std::exception_ptr err;
#pragma omp parallel
  {
    MillingEnv env(c);
    auto p = policy.clone();
#pragma omp for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
      try {
        out[i] = run_one(env, *p, seeds[i]);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr r;
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

ComparisonRow summarize(const std::string& name, const std::vector<EpisodeSummary>& episodes) {
  ComparisonRow row;
  row.name = name;
  row.n = static_cast<int>(episodes.size());
  std::vector<double> t, d, m, f, tot;
  for (const auto& e : episodes) {
    t.push_back(e.reward.time_term);
    d.push_back(e.reward.deviation_term);
    m.push_back(e.reward.mrv_term);
    f.push_back(e.reward.force_term);
    tot.push_back(e.reward.total);
    if (e.termination == Termination::safety) ++row.safety_terminations;
  }
  row.time = mean_stderr(t);
  row.deviation = mean_stderr(d);
  row.mrv = mean_stderr(m);
  row.force = mean_stderr(f);
  row.total = mean_stderr(tot);
  return row;
}

double sign_test_p_value(int wins, int losses) {
  if (wins < 0 || losses < 0) throw InvalidArgument("sign test counts must be non-negative");
  const int n = wins + losses;
  if (n == 0) return 1.0;
  // Sum of C(n, k) / 2^n for k >= wins, in log space.
  double p = 0.0;
  for (int k = wins; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  n * std::log(2.0));
  return std::min(1.0, p);
}

PairedOutcome paired_sign_test(const std::vector<EpisodeSummary>& a,
                               const std::vector<EpisodeSummary>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("paired comparison needs equal episode counts");
  PairedOutcome r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].seed != b[i].seed) throw InvalidArgument("paired comparison needs matching seeds");
    if (a[i].reward.total > b[i].reward.total)
      ++r.wins;
    else if (a[i].reward.total < b[i].reward.total)
      ++r.losses;
    else
      ++r.ties;
  }
  r.p_value = sign_test_p_value(r.wins, r.losses);
  return r;
}

void write_comparison_table(const std::filesystem::path& file,
                            const std::vector<ComparisonRow>& rows) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream o(file);
  if (!o) throw Error("cannot write " + file.string());
  o << std::setprecision(10);
  o << "policy,n,time_mean,time_stderr,deviation_mean,deviation_stderr,mrv_mean,mrv_stderr,"
       "force_mean,force_stderr,total_mean,total_stderr,safety_terminations\n";
  for (const auto& r : rows) {
    o << r.name << ',' << r.n;
    for (const MeanStderr* m : {&r.time, &r.deviation, &r.mrv, &r.force, &r.total})
      o << ',' << m->mean << ',' << m->stderr_;
    o << ',' << r.safety_terminations << '\n';
  }
}

}  // namespace millforge
