#include "millforge/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace millforge {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kJitters[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

MatrixXd signal_kernel(const MatrixXd& x, const VectorXd& inv_ls2, double s2) {
  const Eigen::Index n = x.rows();
  MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = s2;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r2 = ((x.row(i) - x.row(j)).array().square() * inv_ls2.transpose().array()).sum();
      k(i, j) = k(j, i) = s2 * std::exp(-0.5 * r2);
    }
  }
  return k;
}

// Cholesky of kf + noise I with escalating jitter (relative to the signal
// variance).
Eigen::LLT<MatrixXd> factorize(const MatrixXd& kf, double noise, double s2, double* jitter_used) {
  const Eigen::Index n = kf.rows();
  for (double j : kJitters) {
    MatrixXd k = kf;
    k.diagonal().array() += noise + j * s2;
    Eigen::LLT<MatrixXd> llt(k);
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
      if (jitter_used) *jitter_used = j * s2;
      return llt;
    }
    (void)n;
  }
  throw SingularCovariance("GP covariance is not positive definite even with jitter 1e-4");
}

struct Bounds {
  VectorXd lo, hi;
};

VectorXd pack(const GpHyper& h, bool with_noise) {
  const Eigen::Index d = h.length_scales.size();
  VectorXd t(d + 1 + (with_noise ? 1 : 0));
  t.head(d) = h.length_scales.array().log();
  t[d] = std::log(h.signal_var);
  if (with_noise) t[d + 1] = std::log(h.noise_var);
  return t;
}

GpHyper unpack(const VectorXd& t, Eigen::Index d, std::optional<double> fixed_noise) {
  GpHyper h;
  h.length_scales = t.head(d).array().exp();
  h.signal_var = std::exp(t[d]);
  h.noise_var = fixed_noise ? *fixed_noise : std::exp(t[d + 1]);
  return h;
}

}  // namespace

double gp_log_marginal_likelihood(const MatrixXd& x, const VectorXd& y, const GpHyper& hyper,
                                  VectorXd* grad, double* jitter_used) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (y.size() != n) throw DimensionMismatch("GP targets and inputs differ in count");
  if (hyper.length_scales.size() != d) throw DimensionMismatch("length scales vs input dim");
  const VectorXd inv_ls2 = hyper.length_scales.array().square().inverse();
  const MatrixXd kf = signal_kernel(x, inv_ls2, hyper.signal_var);
  double jit = 0.0;
  const Eigen::LLT<MatrixXd> llt = factorize(kf, hyper.noise_var, hyper.signal_var, &jit);
  if (jitter_used) *jitter_used = jit;
  const VectorXd alpha = llt.solve(y);
  const MatrixXd l = llt.matrixL();
  const double lml = -0.5 * y.dot(alpha) - l.diagonal().array().log().sum() -
                     0.5 * static_cast<double>(n) * std::log(kTwoPi);
  if (grad) {
    const MatrixXd kinv = llt.solve(MatrixXd::Identity(n, n));
    const MatrixXd w = alpha * alpha.transpose() - kinv;
    grad->resize(d + 2);
    for (Eigen::Index k = 0; k < d; ++k) {
      double g = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < i; ++j) {
          const double dx = x(i, k) - x(j, k);
          g += w(i, j) * kf(i, j) * dx * dx * inv_ls2[k];
        }
      (*grad)[k] = g;  // symmetric off-diagonal pairs: 2 * (1/2)
    }
    (*grad)[d] = 0.5 * (w.array() * kf.array()).sum();
    (*grad)[d + 1] = 0.5 * hyper.noise_var * w.trace();
  }
  return lml;
}

double expected_improvement(const GpPrediction& p, double best, double xi) {
  const double sd = std::sqrt(std::max(p.variance, 0.0));
  const double imp = p.mean - best - xi;
  if (!(sd > 1e-12)) return std::max(imp, 0.0);
  const double z = imp / sd;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(kTwoPi);
  return std::max(imp * cdf + sd * pdf, 0.0);
}

VectorXd GaussianProcess::scale(const VectorXd& x) const {
  if (x.size() != lower_.size()) throw DimensionMismatch("GP query has wrong dimension");
  return (x - lower_).cwiseQuotient(upper_ - lower_);
}

double GaussianProcess::kernel(const VectorXd& a, const VectorXd& b) const {
  return hyper_.signal_var * std::exp(-0.5 * ((a - b).array().square() * inv_ls2_.array()).sum());
}

GaussianProcess GaussianProcess::condition(const MatrixXd& x, const VectorXd& y,
                                           const GpHyper& hyper, const VectorXd& lower,
                                           const VectorXd& upper) {
  if (x.rows() != y.size()) throw DimensionMismatch("GP targets and inputs differ in count");
  if (x.rows() < 1) throw InvalidArgument("GP needs at least one sample");
  if (lower.size() != x.cols() || upper.size() != x.cols())
    throw DimensionMismatch("GP box dimension mismatch");
  if ((upper - lower).minCoeff() <= 0.0) throw InvalidArgument("GP box must have positive width");
  GaussianProcess gp;
  gp.x_raw_ = x;
  gp.y_raw_ = y;
  gp.lower_ = lower;
  gp.upper_ = upper;
  gp.x_.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) gp.x_.row(i) = gp.scale(x.row(i).transpose());
  gp.y_mean_ = y.mean();
  const double sd = std::sqrt((y.array() - gp.y_mean_).square().mean());
  gp.y_scale_ = sd > 1e-12 * std::max(1.0, std::abs(gp.y_mean_)) ? sd : 1.0;
  gp.hyper_ = hyper;
  gp.inv_ls2_ = hyper.length_scales.array().square().inverse();
  const VectorXd ys = (y.array() - gp.y_mean_) / gp.y_scale_;
  const MatrixXd kf = signal_kernel(gp.x_, gp.inv_ls2_, hyper.signal_var);
  gp.llt_ = factorize(kf, hyper.noise_var, hyper.signal_var, &gp.jitter_);
  gp.alpha_ = gp.llt_.solve(ys);
  const MatrixXd l = gp.llt_.matrixL();
  gp.lml_ = -0.5 * ys.dot(gp.alpha_) - l.diagonal().array().log().sum() -
            0.5 * static_cast<double>(ys.size()) * std::log(kTwoPi);
  return gp;
}

GaussianProcess GaussianProcess::fit(const MatrixXd& x, const VectorXd& y, const GpOptions& o) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (y.size() != n) throw DimensionMismatch("GP targets and inputs differ in count");
  if (n < 2) throw InvalidArgument("GP fit needs at least 2 samples");
  if (o.restarts < 1 || o.max_iterations < 0) throw InvalidArgument("bad GP optimiser settings");
  bool distinct = false;
  for (Eigen::Index i = 1; i < n && !distinct; ++i)
    distinct = (x.row(i) - x.row(0)).cwiseAbs().maxCoeff() > 0.0;
  if (!distinct) throw InvalidArgument("GP fit needs at least 2 distinct inputs");

  VectorXd lower = o.lower ? *o.lower : VectorXd(x.colwise().minCoeff().transpose());
  VectorXd upper = o.upper ? *o.upper : VectorXd(x.colwise().maxCoeff().transpose());
  if (lower.size() != d || upper.size() != d) throw DimensionMismatch("GP box dimension mismatch");
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(upper[k] > lower[k])) upper[k] = lower[k] + 1.0;

  MatrixXd xu(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    xu.row(i) = (x.row(i) - lower.transpose()).cwiseQuotient((upper - lower).transpose());
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().mean());
  const double scale = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  const VectorXd ys = (y.array() - mean) / scale;

  const bool fit_noise = !o.fixed_noise_var.has_value();
  const Eigen::Index np = d + 1 + (fit_noise ? 1 : 0);
  VectorXd lo(np), hi(np);
  lo.head(d).setConstant(std::log(o.min_length_scale));
  hi.head(d).setConstant(std::log(o.max_length_scale));
  lo[d] = std::log(1e-3);
  hi[d] = std::log(1e3);
  if (fit_noise) {
    lo[d + 1] = std::log(o.min_noise_var);
    hi[d + 1] = std::log(o.max_noise_var);
  }

  auto objective = [&](const VectorXd& t, VectorXd* g) {
    const GpHyper h = unpack(t, d, o.fixed_noise_var);
    VectorXd full;
    double v;
    try {
      v = gp_log_marginal_likelihood(xu, ys, h, g ? &full : nullptr);
    } catch (const SingularCovariance&) {
      return -std::numeric_limits<double>::infinity();
    }
    if (g) *g = full.head(np);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  VectorXd best_t;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < o.restarts; ++r) {
    VectorXd t(np);
    if (r == 0) {
      GpHyper h0;
      if (o.initial && o.initial->length_scales.size() == d) {
        h0 = *o.initial;
      } else {
        h0.length_scales = VectorXd::Constant(d, 0.3);
        h0.signal_var = 1.0;
        h0.noise_var = 1e-4;
      }
      if (o.fixed_noise_var) h0.noise_var = *o.fixed_noise_var;
      t = pack(h0, fit_noise);
    } else {
      for (Eigen::Index k = 0; k < d; ++k)
        t[k] = std::log(0.05) + (std::log(2.0) - std::log(0.05)) * u01(rng);
      t[d] = std::log(0.1) + (std::log(10.0) - std::log(0.1)) * u01(rng);
      if (fit_noise) t[d + 1] = std::log(1e-8) + (std::log(1e-1) - std::log(1e-8)) * u01(rng);
    }
    t = t.cwiseMax(lo).cwiseMin(hi);
    VectorXd g;
    double v = objective(t, &g);
    if (!std::isfinite(v)) continue;
    double step = 0.1;
    for (int it = 0; it < o.max_iterations && step > 1e-8; ++it) {
      const double gn = g.norm();
      if (!(gn > 1e-9)) break;
      bool accepted = false;
      while (step > 1e-8) {
        const VectorXd cand = (t + step * g / gn).cwiseMax(lo).cwiseMin(hi);
        if ((cand - t).norm() < 1e-10) {
          step = 0.0;
          break;
        }
        VectorXd cg;
        const double cv = objective(cand, &cg);
        if (cv > v) {
          accepted = true;
          const double gain = cv - v;
          t = cand;
          v = cv;
          g = cg;
          step *= 1.5;
          if (gain < 1e-10) step = 0.0;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }
  if (!std::isfinite(best_v))
    throw SingularCovariance("GP covariance is not positive definite for any restart");
  return condition(x, y, unpack(best_t, d, o.fixed_noise_var), lower, upper);
}

GpPrediction GaussianProcess::predict(const VectorXd& x) const {
  const VectorXd xs = scale(x);
  VectorXd ks(x_.rows());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) ks[i] = kernel(xs, x_.row(i).transpose());
  GpPrediction p;
  p.mean = y_mean_ + y_scale_ * ks.dot(alpha_);
  const VectorXd v = llt_.matrixL().solve(ks);
  p.variance = std::max(0.0, y_scale_ * y_scale_ * (hyper_.signal_var - v.squaredNorm()));
  return p;
}

double GaussianProcess::predict_mean(const VectorXd& x) const {
  const VectorXd xs = scale(x);
  double m = 0.0;
  for (Eigen::Index i = 0; i < x_.rows(); ++i) m += alpha_[i] * kernel(xs, x_.row(i).transpose());
  return y_mean_ + y_scale_ * m;
}

VectorXd GaussianProcess::mean_gradient(const VectorXd& x) const {
  const VectorXd xs = scale(x);
  VectorXd g = VectorXd::Zero(xs.size());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    const VectorXd diff = xs - x_.row(i).transpose();
    g -= alpha_[i] * kernel(xs, x_.row(i).transpose()) * diff.cwiseProduct(inv_ls2_);
  }
  return y_scale_ * g.cwiseQuotient(upper_ - lower_);
}

std::vector<GpPrediction> GaussianProcess::predict_batch(const MatrixXd& x, Exec exec) const {
  std::vector<GpPrediction> out(static_cast<std::size_t>(x.rows()));
  const long n = static_cast<long>(x.rows());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = predict(x.row(i).transpose());
  } else {
    for (long i = 0; i < n; ++i) out[i] = predict(x.row(i).transpose());
  }
  return out;
}

VectorXd GaussianProcess::predict_mean_batch(const MatrixXd& x, Exec exec) const {
  VectorXd out(x.rows());
  const long n = static_cast<long>(x.rows());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = predict_mean(x.row(i).transpose());
  } else {
    for (long i = 0; i < n; ++i) out[i] = predict_mean(x.row(i).transpose());
  }
  return out;
}

MatrixXd GaussianProcess::training_covariance() const {
  MatrixXd k = signal_kernel(x_, inv_ls2_, hyper_.signal_var);
  k.diagonal().array() += hyper_.noise_var + jitter_;
  return k;
}

}  // namespace millforge
