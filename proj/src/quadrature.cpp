#include "failprob/quadrature.hpp"

#include "failprob/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace failprob {

namespace {

constexpr double kExpCeiling = 700.0;

}  // namespace

std::vector<double> lognormal_mean(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, bool* saturated) {
  std::vector<double> out(static_cast<std::size_t>(mean.size()));
  bool sat = false;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    double e = mean[i] + 0.5 * var[i];
    if (!(e <= kExpCeiling)) {
      sat = true;
      e = kExpCeiling;
    }
    out[static_cast<std::size_t>(i)] = std::exp(e);
  }
  if (sat) warn("log-normal mean saturated: exponent above 700 (diverged fit?)");
  if (saturated) *saturated = sat;
  return out;
}

GriddedField cde_estimate(const GpPosterior& gp, const EnvGrid& grid) {
  const Prediction pred = gp.predict(grid.centers());
  return GriddedField{grid.counts(), lognormal_mean(pred.mean, pred.var)};
}

GpEstimate failure_prob_from_prediction(const Prediction& pred, const EnvGrid& grid) {
  GpEstimate est;
  est.integrand = lognormal_mean(pred.mean, pred.var, &est.saturated);
  double s = 0.0;
  for (double v : est.integrand) s += v;
  est.p_hat = s * grid.cell_area();
  return est;
}

GpEstimate failure_prob_gp(const GpPosterior& gp, const EnvGrid& grid) {
  return failure_prob_from_prediction(gp.predict(grid.centers()), grid);
}

double gp_abs_error(double p_hat, double p_true) { return std::abs(p_true - p_hat); }

double logistic_convolution(double mean, double var) {
  const double z = mean / std::sqrt(1.0 + std::numbers::pi * var / 8.0);
  return 1.0 / (1.0 + std::exp(-z));
}

double failure_prob_logistic_gp(const GpPosterior& gp_fp, const EnvGrid& grid,
                                const std::function<double(const EnvPoint&)>& env_density) {
  const Prediction pred = gp_fp.predict(grid.centers());
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s += logistic_convolution(pred.mean[ii], pred.var[ii]) * env_density(grid.center(i));
  }
  return s * grid.cell_area();
}

double TargetFloor::floor_for(std::size_t n_rl) const {
  if (kind == Kind::absolute) return probability;
  return 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(n_rl, 1)));
}

double log_cde_target(double p_emp, double env_density, std::size_t n_rl, const TargetFloor& floor) {
  const double p = std::max(p_emp, floor.floor_for(n_rl));
  return std::log(std::max(p * env_density, floor.cde));
}

double logit_target(double p_emp, std::size_t n_rl) {
  const double lo = 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(n_rl, 1)));
  const double p = std::clamp(p_emp, lo, 1.0 - lo);
  return std::log(p / (1.0 - p));
}

}  // namespace failprob
