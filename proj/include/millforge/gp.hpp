#pragma once

#include "millforge/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace millforge {

/// ARD squared-exponential kernel hyperparameters, on inputs scaled to the
/// unit box and targets standardised to zero mean, unit variance.
struct GpHyper {
  Eigen::VectorXd length_scales;
  double signal_var = 1.0;
  double noise_var = 1e-6;
};

struct GpOptions {
  // Input box used to scale X to [0, 1]^d. Defaults to the data range.
  std::optional<Eigen::VectorXd> lower;
  std::optional<Eigen::VectorXd> upper;
  // Fix the (standardised) noise variance instead of fitting it.
  std::optional<double> fixed_noise_var;
  int restarts = 8;
  int max_iterations = 200;
  double min_length_scale = 1e-2;
  double max_length_scale = 1e2;
  double min_noise_var = 1e-10;
  double max_noise_var = 1.0;
  std::uint64_t seed = 0;
  // Start of the first restart (others are random); used for warm starts.
  std::optional<GpHyper> initial;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Kriging model: constant mean (the target mean) plus a zero-mean GP.
class GaussianProcess {
 public:
  GaussianProcess() = default;

  /// Maximises the log marginal likelihood by multi-start gradient ascent.
  static GaussianProcess fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const GpOptions& opts = {});
  /// Conditions on the data with fixed hyperparameters.
  static GaussianProcess condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const GpHyper& hyper, const Eigen::VectorXd& lower,
                                   const Eigen::VectorXd& upper);

  int dim() const { return static_cast<int>(lower_.size()); }
  int size() const { return static_cast<int>(x_.rows()); }
  const GpHyper& hyper() const { return hyper_; }
  double log_marginal_likelihood() const { return lml_; }
  double jitter() const { return jitter_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const Eigen::MatrixXd& inputs() const { return x_raw_; }
  const Eigen::VectorXd& targets() const { return y_raw_; }

  GpPrediction predict(const Eigen::VectorXd& x) const;
  double predict_mean(const Eigen::VectorXd& x) const;
  /// Gradient of the posterior mean with respect to raw inputs.
  Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const;
  /// Rows of `x` are query points.
  std::vector<GpPrediction> predict_batch(const Eigen::MatrixXd& x,
                                          Exec exec = Exec::parallel) const;
  Eigen::VectorXd predict_mean_batch(const Eigen::MatrixXd& x, Exec exec = Exec::parallel) const;

  /// Covariance of the standardised training data including noise and jitter.
  Eigen::MatrixXd training_covariance() const;

 private:
  Eigen::VectorXd scale(const Eigen::VectorXd& x) const;
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

  Eigen::MatrixXd x_raw_;
  Eigen::VectorXd y_raw_;
  Eigen::MatrixXd x_;  // unit box
  Eigen::VectorXd lower_, upper_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  GpHyper hyper_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd inv_ls2_;
};

/// Log marginal likelihood and its gradient with respect to
/// (log l_1..log l_d, log s^2, log sigma_n^2) on already-scaled data.
/// Throws SingularCovariance when no jitter up to 1e-4 makes K factorisable.
double gp_log_marginal_likelihood(const Eigen::MatrixXd& x_unit, const Eigen::VectorXd& y_std,
                                  const GpHyper& hyper, Eigen::VectorXd* grad = nullptr,
                                  double* jitter_used = nullptr);

/// Expected improvement for maximisation; never negative.
double expected_improvement(const GpPrediction& p, double best, double xi = 0.0);

}  // namespace millforge
