#include "failprob/optimize.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace failprob {

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

OptResult minimize_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const BoxOptions& opts) {
  const Eigen::Index n = x0.size();
  OptResult res;
  res.x = project(std::move(x0), lower, upper);
  Eigen::VectorXd g(n);
  res.value = f(res.x, &g);
  res.evaluations = 1;
  if (!std::isfinite(res.value) || !g.allFinite()) return res;

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  const double bound_eps = 1e-12;

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it + 1;
    const Eigen::VectorXd pg = project(res.x - g, lower, upper) - res.x;
    if (pg.cwiseAbs().maxCoeff() < opts.gtol) {
      res.converged = true;
      break;
    }

    std::vector<bool> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      active[i] = (res.x[i] <= lower[i] + bound_eps && g[i] > 0) || (res.x[i] >= upper[i] - bound_eps && g[i] < 0);
    }
    Eigen::VectorXd d = -(h * g);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active[i]) d[i] = 0.0;
    }
    if (g.dot(d) >= 0.0) {
      h.setIdentity();
      d = -g;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (active[i]) d[i] = 0.0;
      }
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    double t = dmax > opts.max_step ? opts.max_step / dmax : 1.0;

    Eigen::VectorXd x_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = project(res.x + t * d, lower, upper);
      f_new = f(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.value + 1e-4 * g.dot(x_new - res.x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Steepest descent restart failed too: stationary to working precision.
      res.converged = h.isIdentity();
      if (!res.converged) {
        h.setIdentity();
        continue;
      }
      break;
    }
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double change = res.value - f_new;
    res.x = x_new;
    res.value = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (change < opts.ftol * (1.0 + std::abs(res.value))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f, double rel_step) {
  return [f = std::move(f), rel_step](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double v = f(x);
    if (grad) {
      grad->resize(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = rel_step * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        (*grad)[i] = (f(xp) - f(xm)) / (2.0 * h);
      }
    }
    return v;
  };
}

Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                double rel_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h[i] = rel_step * std::max(1.0, std::abs(x[i]));
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      if (i == j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h[i];
        xm[i] -= h[i];
        hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
      } else {
        Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
        pp[i] += h[i]; pp[j] += h[j];
        pm[i] += h[i]; pm[j] -= h[j];
        mp[i] -= h[i]; mp[j] += h[j];
        mm[i] -= h[i]; mm[j] -= h[j];
        hess(i, j) = hess(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
      }
    }
  }
  return hess;
}

}  // namespace failprob
