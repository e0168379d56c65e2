#pragma once

#include "failprob/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

namespace failprob {

struct KernelParams final {
  static constexpr double nu_smooth = 2.5;
  static constexpr double alpha_ng = 1e-5;

  double sigma2_mt = 1.0;
  double ell = 1.0;
  double c_kr = 1.0;
  double kappa = 1e-4;

  void validate() const;
  double prior_variance() const { return c_kr * sigma2_mt + kappa; }
  Eigen::Vector4d to_log() const;
  static KernelParams from_log(const Eigen::Vector4d& v);
};

void to_json(nlohmann::json& j, const KernelParams& p);
void from_json(const nlohmann::json& j, KernelParams& p);

// Closed-form half-integer Matern (nu = 5/2).
double matern52(double r, double sigma2, double ell);
// General Matern through the modified Bessel function of the second kind.
double matern_bessel(double r, double sigma2, double ell, double nu);
double matern(const EnvPoint& x, const EnvPoint& y, const KernelParams& p);
double full_kernel(const EnvPoint& x, const EnvPoint& y, const KernelParams& p);

// Full kernel between row sets; white noise applies to exactly equal rows.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p);

class TrainingSet final {
 public:
  // Merges exact duplicates by averaging targets.
  void add(const EnvPoint& x, double target);
  std::size_t size() const { return targets_.size(); }
  bool empty() const { return targets_.empty(); }
  bool contains(const EnvPoint& x) const;

  const std::vector<EnvPoint>& points() const { return points_; }
  const std::vector<double>& targets() const { return targets_; }
  const std::vector<int>& multiplicity() const { return multiplicity_; }
  Eigen::MatrixXd point_matrix() const;
  Eigen::VectorXd target_vector() const;

 private:
  std::vector<EnvPoint> points_;
  std::vector<double> targets_;
  std::vector<int> multiplicity_;
};

struct PosteriorPoint final {
  double mean = 0.0;
  double cov = 0.0;
};

struct Prediction final {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

class GpPosterior final {
 public:
  GpPosterior(TrainingSet train, KernelParams params);

  const KernelParams& params() const { return params_; }
  const TrainingSet& train() const { return train_; }
  const Eigen::MatrixXd& points() const { return points_; }

  PosteriorPoint posterior_at(const EnvPoint& x, const EnvPoint& y) const;
  double mean(const EnvPoint& x) const;
  double variance(const EnvPoint& x) const;
  Prediction predict(const Eigen::MatrixXd& xs) const;

  // L^{-1} K(D, xs) for the cached factor L of K(D,D) + alpha I.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& xs) const;
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  double clamp_variance(double v, double prior) const;

  TrainingSet train_;
  KernelParams params_;
  Eigen::MatrixXd points_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weights_;
};

double log_marginal_likelihood(const TrainingSet& train, const KernelParams& params);
// Gradient with respect to log(sigma2_mt, ell, c_kr, kappa).
double log_marginal_likelihood(const TrainingSet& train, const KernelParams& params, Eigen::Vector4d& grad_log);

struct MleBounds final {
  KernelParams lower;
  KernelParams upper;
  // Bounds scaled to a domain whose diagonal length is `diagonal`.
  static MleBounds for_diagonal(double diagonal);
};

struct MleResult final {
  KernelParams params;
  double log_lik = 0.0;
  bool converged = false;
  bool warning = false;
  int evaluations = 0;
};

struct MleOptions final {
  int n_starts = 5;
  int max_iter_cold = 200;
  int max_iter_warm = 60;
};

MleResult fit_mle(const TrainingSet& train, const KernelParams& init, bool warm_start, const MleBounds& bounds,
                  Rng& rng, const MleOptions& opts = {});

}  // namespace failprob
