#include "millforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace millforge {

RunningNormalizer::RunningNormalizer(int dim, double clip)
    : mean_(VecX::Zero(dim)), m2_(VecX::Zero(dim)), clip_(clip) {
  if (dim < 1) throw InvalidArgument("normalizer dimension must be >= 1");
  if (!(clip > 0.0)) throw InvalidArgument("normalizer clip must be positive");
}

VecX RunningNormalizer::variance() const {
  if (count_ < 1.0) return VecX::Ones(dim());  // no data: pass through
  return (m2_ / count_).cwiseMax(0.0);
}

void RunningNormalizer::update(const VecX& x) {
  if (x.size() != mean_.size()) throw DimensionMismatch("normalizer input has wrong size");
  if (!x.allFinite()) return;
  count_ += 1.0;
  const VecX delta = x - mean_;
  mean_ += delta / count_;
  m2_ += delta.cwiseProduct(x - mean_);
}

VecX RunningNormalizer::normalize(const VecX& x) {
  if (x.size() != mean_.size()) throw DimensionMismatch("normalizer input has wrong size");
  if (!frozen_) update(x);
  return apply(x);
}

VecX RunningNormalizer::apply(const VecX& x) const {
  if (x.size() != mean_.size()) throw DimensionMismatch("normalizer input has wrong size");
  const VecX var = variance();
  VecX out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    double v;
    if (std::isnan(xi))
      v = 0.0;
    else if (std::isinf(xi))
      v = xi > 0 ? clip_ : -clip_;
    else
      v = (xi - mean_[i]) / std::sqrt(var[i] + 1e-8);
    out[i] = std::clamp(v, -clip_, clip_);
  }
  return out;
}

void RunningNormalizer::merge(const RunningNormalizer& o) {
  if (o.dim() != dim()) throw DimensionMismatch("normalizer merge with different dimension");
  if (o.count_ <= 0.0) return;
  if (count_ <= 0.0) {
    count_ = o.count_;
    mean_ = o.mean_;
    m2_ = o.m2_;
    return;
  }
  const double n = count_ + o.count_;
  const VecX delta = o.mean_ - mean_;
  mean_ += delta * (o.count_ / n);
  m2_ += o.m2_ + delta.cwiseProduct(delta) * (count_ * o.count_ / n);
  count_ = n;
}

void RunningNormalizer::set_state(double count, VecX mean, VecX m2) {
  if (mean.size() != m2.size()) throw DimensionMismatch("normalizer mean/m2 size mismatch");
  if (count < 0.0 || m2.minCoeff() < 0.0)
    throw InvalidArgument("normalizer state must have count >= 0 and m2 >= 0");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

// ---------------------------------------------------------------------------

ConstantParamsPolicy::ConstantParamsPolicy(ProcessParams params, const ObsLayout& layout,
                                           ActionBounds bounds, double path_speed_mm_s,
                                           double control_dt, double feed_time_constant_s,
                                           double doc_gain_per_s)
    : params_(params), layout_(layout), bounds_(bounds), path_speed_(path_speed_mm_s),
      control_dt_(control_dt), tau_(feed_time_constant_s), doc_gain_(doc_gain_per_s) {
  if (!(params.feed_mm_s > 0.0)) throw InvalidArgument("feed must be positive");
  if (!(params.doc_mm >= 0.0)) throw InvalidArgument("depth of cut must be >= 0");
  if (!(path_speed_mm_s > 0.0) || !(control_dt > 0.0) || !(feed_time_constant_s > 0.0) ||
      !(doc_gain_per_s > 0.0))
    throw InvalidArgument("regulator constants must be positive");
}

VecX ConstantParamsPolicy::act(const VecX& obs) {
  if (obs.size() != layout_.size) throw DimensionMismatch("observation has wrong size");
  const double target = params_.feed_mm_s / path_speed_ - 1.0;
  t_rate_ += (target - t_rate_) * (1.0 - std::exp2(-control_dt_ / tau_));
  double n_delta = obs[layout_.n_delta];
  if (!std::isfinite(n_delta)) n_delta = 0.0;
  const double n_rate = doc_gain_ * (-params_.doc_mm - n_delta);
  VecX a(5);
  const double k = std::clamp(params_.stiffness, bounds_.stiffness_min, bounds_.stiffness_max);
  a << k, k, k, std::clamp(t_rate_, bounds_.t_rate_min, bounds_.t_rate_max),
      std::clamp(n_rate, bounds_.n_rate_min, bounds_.n_rate_max);
  return a;
}

std::unique_ptr<Policy> ConstantParamsPolicy::clone() const {
  return std::make_unique<ConstantParamsPolicy>(*this);
}

std::unique_ptr<ConstantParamsPolicy> baseline_policy(const EnvConfig& cfg,
                                                      ProcessParams params) {
  return std::make_unique<ConstantParamsPolicy>(
      params, ObsLayout::make(cfg.augmented_observation, cfg.outer_product_alignment),
      cfg.action, cfg.path_speed_mm_s, cfg.control_dt);
}

// ---------------------------------------------------------------------------

LinearPolicy::LinearPolicy(int obs_dim, VecX low, VecX high)
    : obs_dim_(obs_dim), low_(std::move(low)), high_(std::move(high)), norm_(obs_dim) {
  if (low_.size() != high_.size() || low_.size() < 1)
    throw DimensionMismatch("action bounds must have equal, nonzero size");
  if ((high_ - low_).minCoeff() < 0.0) throw InvalidArgument("action bounds inverted");
  theta_ = VecX::Zero(n_params());
  norm_.set_frozen(true);
}

void LinearPolicy::set_params(const VecX& theta) {
  if (theta.size() != n_params()) throw DimensionMismatch("parameter vector has wrong size");
  theta_ = theta;
}

void LinearPolicy::set_normalizer(const RunningNormalizer& n) {
  if (n.dim() != obs_dim_) throw DimensionMismatch("normalizer dimension mismatch");
  const bool frozen = norm_.frozen();
  norm_ = n;
  norm_.set_frozen(frozen);
}

VecX LinearPolicy::act(const VecX& obs) {
  if (obs.size() != obs_dim_) throw DimensionMismatch("observation has wrong size");
  if (sink_) sink_->update(obs);
  const VecX z = norm_.normalize(obs);
  const int na = action_dim();
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      w(theta_.data(), na, obs_dim_);
  const VecX pre = w * z + theta_.tail(na);
  VecX a(na);
  for (int i = 0; i < na; ++i) {
    const double s = 0.5 * (std::tanh(pre[i]) + 1.0);
    a[i] = std::clamp(low_[i] + (high_[i] - low_[i]) * s, low_[i], high_[i]);
  }
  return a;
}

std::unique_ptr<Policy> LinearPolicy::clone() const {
  auto p = std::make_unique<LinearPolicy>(*this);
  p->sink_ = nullptr;
  return p;
}

// ---------------------------------------------------------------------------

MlpPolicy::MlpPolicy(std::vector<MatX> weights, std::vector<VecX> biases, VecX low, VecX high)
    : weights_(std::move(weights)), biases_(std::move(biases)), low_(std::move(low)),
      high_(std::move(high)) {
  if (weights_.empty() || weights_.size() != biases_.size())
    throw DimensionMismatch("mlp needs one bias per weight matrix");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].rows() != biases_[l].size())
      throw DimensionMismatch("mlp bias size does not match layer output");
    if (l > 0 && weights_[l].cols() != weights_[l - 1].rows())
      throw DimensionMismatch("mlp layer sizes do not chain");
  }
  if (weights_.back().rows() != low_.size() || low_.size() != high_.size())
    throw DimensionMismatch("mlp output size does not match the action bounds");
  norm_ = RunningNormalizer(static_cast<int>(weights_.front().cols()));
  norm_.set_frozen(true);
}

void MlpPolicy::set_normalizer(const RunningNormalizer& n) {
  if (n.dim() != obs_dim()) throw DimensionMismatch("normalizer dimension mismatch");
  norm_ = n;
  norm_.set_frozen(true);
}

VecX MlpPolicy::act(const VecX& obs) {
  if (obs.size() != obs_dim()) throw DimensionMismatch("observation has wrong size");
  VecX h = norm_.apply(obs);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = weights_[l] * h + biases_[l];
    if (l + 1 < weights_.size()) h = h.array().tanh().matrix();
  }
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (std::isnan(h[i])) h[i] = 0.5 * (low_[i] + high_[i]);
  return h.cwiseMax(low_).cwiseMin(high_);
}

std::unique_ptr<Policy> MlpPolicy::clone() const { return std::make_unique<MlpPolicy>(*this); }

// ---------------------------------------------------------------------------

StiffnessPumpPolicy::StiffnessPumpPolicy(double k_low, double k_high,
                                         std::unique_ptr<ConstantParamsPolicy> base,
                                         const ObsLayout& layout)
    : k_low_(k_low), k_high_(k_high), base_(std::move(base)), layout_(layout) {
  if (!(k_low > 0.0 && k_high >= k_low)) throw InvalidArgument("need 0 < k_low <= k_high");
  if (!base_) throw InvalidArgument("stiffness pump needs a base policy");
}

VecX StiffnessPumpPolicy::act(const VecX& obs) {
  VecX a = base_->act(obs);
  const Vec3 e = obs.segment<3>(layout_.e);
  if (have_prev_) {
    const Vec3 de = e - prev_e_;
    for (int i = 0; i < 3; ++i) a[i] = e[i] * de[i] < 0.0 ? k_high_ : k_low_;
  } else {
    a.head<3>().setConstant(k_low_);
  }
  prev_e_ = e;
  have_prev_ = true;
  return a;
}

void StiffnessPumpPolicy::reset() {
  base_->reset();
  have_prev_ = false;
  prev_e_.setZero();
}

std::unique_ptr<Policy> StiffnessPumpPolicy::clone() const {
  return std::make_unique<StiffnessPumpPolicy>(
      k_low_, k_high_, std::make_unique<ConstantParamsPolicy>(*base_), layout_);
}

RandomStiffnessPolicy::RandomStiffnessPolicy(std::uint64_t seed, int hold_steps, double k_low,
                                             double k_high,
                                             std::unique_ptr<ConstantParamsPolicy> base)
    : seed_(seed), hold_(hold_steps), k_low_(k_low), k_high_(k_high), base_(std::move(base)),
      rng_(seed) {
  if (hold_steps < 1) throw InvalidArgument("hold_steps must be >= 1");
  if (!(k_low > 0.0 && k_high >= k_low)) throw InvalidArgument("need 0 < k_low <= k_high");
  if (!base_) throw InvalidArgument("random stiffness policy needs a base policy");
}

void RandomStiffnessPolicy::reset() {
  base_->reset();
  rng_.seed(seed_);
  count_ = 0;
}

VecX RandomStiffnessPolicy::act(const VecX& obs) {
  VecX a = base_->act(obs);
  if (count_ % hold_ == 0)
    for (int i = 0; i < 3; ++i) k_[i] = k_low_ + (k_high_ - k_low_) * uniform01(rng_);
  ++count_;
  a.head<3>() = k_;
  return a;
}

std::unique_ptr<Policy> RandomStiffnessPolicy::clone() const {
  auto p = std::make_unique<RandomStiffnessPolicy>(
      seed_, hold_, k_low_, k_high_, std::make_unique<ConstantParamsPolicy>(*base_));
  return p;
}

// ---------------------------------------------------------------------------

EpisodeResult run_episode(Environment& env, Policy& policy, std::uint64_t seed, int max_steps) {
  EpisodeResult r;
  policy.reset();
  VecX obs = env.reset(seed);
  while (r.steps < max_steps) {
    const Transition t = env.advance(policy.act(obs));
    r.total += t.reward;
    ++r.steps;
    obs = t.observation;
    if (t.done) {
      r.done = true;
      break;
    }
  }
  return r;
}

void CemConfig::validate() const {
  if (generations < 0) throw InvalidArgument("generations must be >= 0");
  if (population < 8) throw InvalidArgument("population must be >= 8");
  if (!(elite_frac > 0.0 && elite_frac <= 0.5))
    throw InvalidArgument("elite_frac must lie in (0, 0.5]");
  if (!(init_std > 0.0) || !(min_std >= 0.0) || !(extra_std >= 0.0))
    throw InvalidArgument("CEM standard deviations must be non-negative");
  if (!(extra_std_decay >= 0.0 && extra_std_decay <= 1.0))
    throw InvalidArgument("extra_std_decay must lie in [0, 1]");
  if (episodes_per_eval < 1) throw InvalidArgument("episodes_per_eval must be >= 1");
}

namespace {

int omp_max_threads_or_one() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int omp_thread_id_or_zero() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

struct Candidate {
  double score = 0.0;
  RunningNormalizer stats;
};

Candidate evaluate(Environment& env, const LinearPolicy& proto, const VecX& theta,
                   const std::vector<std::uint64_t>& seeds) {
  LinearPolicy pol = proto;
  pol.set_params(theta);
  Candidate c;
  c.stats = RunningNormalizer(pol.obs_dim(), pol.normalizer().clip());
  pol.set_observe(&c.stats);
  double sum = 0.0;
  for (std::uint64_t s : seeds) sum += run_episode(env, pol, s).total;
  c.score = sum / static_cast<double>(seeds.size());
  if (!std::isfinite(c.score)) c.score = -std::numeric_limits<double>::infinity();
  return c;
}

}  // namespace

CemResult train_cem(const EnvFactory& make_env, const CemConfig& cfg, const LinearPolicy* init) {
  cfg.validate();
  std::unique_ptr<Environment> probe = make_env();
  LinearPolicy policy = init ? *init
                             : LinearPolicy(probe->observation_dim(), probe->action_low(),
                                            probe->action_high());
  if (policy.obs_dim() != probe->observation_dim() ||
      policy.action_dim() != probe->action_dim())
    throw DimensionMismatch("initial policy does not match the environment");
  policy.normalizer().set_frozen(true);
  policy.set_observe(nullptr);

  CemResult res{policy, policy, {}};
  if (cfg.generations == 0) return res;

  const int n = policy.n_params();
  const int pop = cfg.population;
  const int n_elite = std::max(1, static_cast<int>(std::floor(cfg.elite_frac * pop)));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecX mean = policy.params();
  VecX std_dev = VecX::Constant(n, cfg.init_std);
  double extra = cfg.extra_std;

  const int n_workers =
      cfg.exec == Exec::parallel ? std::max(1, omp_max_threads_or_one()) : 1;
  std::vector<std::unique_ptr<Environment>> envs;
  envs.push_back(std::move(probe));
  for (int w = 1; w < n_workers; ++w) envs.push_back(make_env());

  for (int g = 0; g < cfg.generations; ++g) {
    std::vector<VecX> thetas(pop);
    for (int i = 0; i < pop; ++i) {
      VecX eps(n);
      for (int j = 0; j < n; ++j) eps[j] = gauss(rng);
      thetas[i] = mean + std_dev.cwiseProduct(eps);
    }
    std::vector<std::uint64_t> seeds(cfg.episodes_per_eval);
    for (auto& s : seeds) s = rng();

    std::vector<Candidate> cands(pop);
    if (n_workers > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_workers)
      for (int i = 0; i < pop; ++i)
        cands[i] = evaluate(*envs[omp_thread_id_or_zero()], policy, thetas[i], seeds);
    } else {
      for (int i = 0; i < pop; ++i) cands[i] = evaluate(*envs[0], policy, thetas[i], seeds);
    }

    std::vector<int> order(pop);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return cands[a].score > cands[b].score; });

    VecX new_mean = VecX::Zero(n);
    for (int k = 0; k < n_elite; ++k) new_mean += thetas[order[k]];
    new_mean /= n_elite;
    VecX var = VecX::Zero(n);
    for (int k = 0; k < n_elite; ++k)
      var += (thetas[order[k]] - new_mean).cwiseAbs2();
    var /= n_elite;

    CemGeneration gen;
    gen.generation = g;
    double sum = 0.0;
    int finite = 0;
    for (const auto& c : cands)
      if (std::isfinite(c.score)) {
        sum += c.score;
        ++finite;
      }
    gen.mean = finite ? sum / finite : -std::numeric_limits<double>::infinity();
    double ss = 0.0;
    for (const auto& c : cands)
      if (std::isfinite(c.score)) ss += (c.score - gen.mean) * (c.score - gen.mean);
    gen.std = finite ? std::sqrt(ss / finite) : 0.0;
    gen.best = cands[order[0]].score;
    res.curve.push_back(gen);

    // Both results carry the normaliser their parameters were scored with.
    res.best = policy;
    res.best.set_params(thetas[order[0]]);
    mean = new_mean;
    res.mean_policy = policy;
    res.mean_policy.set_params(mean);

    std_dev = (var.array() + extra * extra).sqrt().max(cfg.min_std).matrix();
    extra *= cfg.extra_std_decay;

    if (g + 1 < cfg.generations) {
      RunningNormalizer merged = policy.normalizer();
      for (const auto& c : cands) merged.merge(c.stats);
      policy.set_normalizer(merged);
    }
  }
  return res;
}

}  // namespace millforge
