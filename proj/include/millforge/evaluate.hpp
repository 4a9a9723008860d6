#pragma once

#include "millforge/env.hpp"
#include "millforge/policy.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace millforge {

struct EpisodeSummary {
  std::uint64_t seed = 0;
  RewardBreakdown reward;
  Termination termination = Termination::none;
  int steps = 0;
  double max_error_mm = 0.0;
};

/// One episode per seed. Parallel execution clones the policy and builds one
/// environment per worker; results are in seed order either way.
std::vector<EpisodeSummary> evaluate_policy(const EnvConfig& cfg, const Policy& policy,
                                            const std::vector<std::uint64_t>& seeds,
                                            Exec exec = Exec::parallel);

std::vector<std::uint64_t> seed_range(std::uint64_t first, int n);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample std / sqrt(n); 0 for n < 2
};

MeanStderr mean_stderr(const std::vector<double>& v);

/// Reward components as positive magnitudes, the way they enter the total.
struct ComparisonRow {
  std::string name;
  MeanStderr time, deviation, mrv, force, total;
  int safety_terminations = 0;
  int n = 0;
};

ComparisonRow summarize(const std::string& name, const std::vector<EpisodeSummary>& episodes);

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2); ties are dropped by the
/// caller.
double sign_test_p_value(int wins, int losses);

struct PairedOutcome {
  int wins = 0;
  int losses = 0;
  int ties = 0;
  double p_value = 1.0;
};

/// Paired comparison of `a` against `b` on Total, seed by seed.
PairedOutcome paired_sign_test(const std::vector<EpisodeSummary>& a,
                               const std::vector<EpisodeSummary>& b);

void write_comparison_table(const std::filesystem::path& file,
                            const std::vector<ComparisonRow>& rows);

}  // namespace millforge
