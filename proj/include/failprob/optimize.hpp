#pragma once

#include <Eigen/Core>

#include <functional>

namespace failprob {

// Objective to minimize. When grad is non-null it must be filled.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BoxOptions final {
  int max_iter = 200;
  double ftol = 1e-10;
  double gtol = 1e-6;
  double max_step = 2.0;
};

struct OptResult final {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

// Projected BFGS with Armijo backtracking on the box [lower, upper].
OptResult minimize_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const BoxOptions& opts = {});

// Wraps a value-only function with central-difference gradients.
Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f, double rel_step = 1e-6);

// Central-difference Hessian of a value-only function.
Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                double rel_step = 1e-4);

}  // namespace failprob
