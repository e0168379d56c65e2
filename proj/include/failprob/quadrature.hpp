#pragma once

#include "failprob/gp.hpp"

#include <functional>

namespace failprob {

struct GpEstimate final {
  double p_hat = 0.0;
  std::vector<double> integrand;
  std::size_t iteration = 0;
  bool saturated = false;
};

// Per-cell exp(mean + var / 2) with overflow saturation.
std::vector<double> lognormal_mean(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, bool* saturated = nullptr);

GriddedField cde_estimate(const GpPosterior& gp, const EnvGrid& grid);
GpEstimate failure_prob_gp(const GpPosterior& gp, const EnvGrid& grid);
GpEstimate failure_prob_from_prediction(const Prediction& pred, const EnvGrid& grid);
double gp_abs_error(double p_hat, double p_true);

double logistic_convolution(double mean, double var);
double failure_prob_logistic_gp(const GpPosterior& gp_fp, const EnvGrid& grid,
                                const std::function<double(const EnvPoint&)>& env_density);

// Zero-count handling for log-CDE and logit targets.
struct TargetFloor final {
  enum class Kind { half_count, absolute };
  Kind kind = Kind::half_count;
  double probability = 0.0;  // used when kind == absolute
  double cde = 1e-300;       // last-resort floor on the product

  double floor_for(std::size_t n_rl) const;
};

double log_cde_target(double p_emp, double env_density, std::size_t n_rl, const TargetFloor& floor = {});
double logit_target(double p_emp, std::size_t n_rl);

}  // namespace failprob
