#include "failprob/gp.hpp"

#include "failprob/optimize.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace failprob {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;

double matern52_unit(double u) { return (1.0 + kSqrt5 * u + 5.0 / 3.0 * u * u) * std::exp(-kSqrt5 * u); }

}  // namespace

void KernelParams::validate() const {
  if (!(sigma2_mt > 0) || !(ell > 0) || !(c_kr > 0)) throw std::invalid_argument("kernel sigma2, ell, C must be > 0");
  if (!(kappa >= 0)) throw std::invalid_argument("kernel white-noise variance must be >= 0");
}

Eigen::Vector4d KernelParams::to_log() const {
  return {std::log(sigma2_mt), std::log(ell), std::log(c_kr), std::log(std::max(kappa, 1e-300))};
}

KernelParams KernelParams::from_log(const Eigen::Vector4d& v) {
  KernelParams p;
  p.sigma2_mt = std::exp(v[0]);
  p.ell = std::exp(v[1]);
  p.c_kr = std::exp(v[2]);
  p.kappa = std::exp(v[3]);
  return p;
}

void to_json(nlohmann::json& j, const KernelParams& p) {
  j = nlohmann::json{{"sigma2_mt", p.sigma2_mt}, {"ell", p.ell},         {"c_kr", p.c_kr},
                     {"kappa", p.kappa},         {"nu_smooth", p.nu_smooth}, {"alpha_ng", p.alpha_ng}};
}

void from_json(const nlohmann::json& j, KernelParams& p) {
  p.sigma2_mt = j.at("sigma2_mt").get<double>();
  p.ell = j.at("ell").get<double>();
  p.c_kr = j.at("c_kr").get<double>();
  p.kappa = j.at("kappa").get<double>();
  if (j.contains("nu_smooth") && j["nu_smooth"].get<double>() != KernelParams::nu_smooth)
    throw std::invalid_argument("nu_smooth is fixed at 2.5");
  if (j.contains("alpha_ng") && j["alpha_ng"].get<double>() != KernelParams::alpha_ng)
    throw std::invalid_argument("alpha_ng is fixed at 1e-5");
  p.validate();
}

double matern52(double r, double sigma2, double ell) { return sigma2 * matern52_unit(r / ell); }

double matern_bessel(double r, double sigma2, double ell, double nu) {
  if (r == 0.0) return sigma2;
  const double z = std::sqrt(2.0 * nu) * r / ell;
  if (z > 700.0) return 0.0;
  return sigma2 * std::pow(2.0, 1.0 - nu) / boost::math::tgamma(nu) * std::pow(z, nu) *
         boost::math::cyl_bessel_k(nu, z);
}

double matern(const EnvPoint& x, const EnvPoint& y, const KernelParams& p) {
  return matern52((x - y).norm(), p.sigma2_mt, p.ell);
}

double full_kernel(const EnvPoint& x, const EnvPoint& y, const KernelParams& p) {
  const double base = p.c_kr * matern(x, y, p);
  return x == y ? base + p.kappa : base;
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
  if (a.cols() != b.cols()) throw std::invalid_argument("kernel_matrix: dimension mismatch");
  Eigen::MatrixXd k(a.rows(), b.rows());
  const double scale = p.c_kr * p.sigma2_mt;
  const double inv_ell = 1.0 / p.ell;
  Eigen::ArrayXd r2(a.rows()), u(a.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    r2.setZero();
    for (Eigen::Index c = 0; c < a.cols(); ++c) r2 += (a.col(c).array() - b(j, c)).square();
    u = r2.sqrt() * inv_ell;
    k.col(j) = scale * (1.0 + kSqrt5 * u + (5.0 / 3.0) * u.square()) * (-kSqrt5 * u).exp();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (r2[i] == 0.0) k(i, j) += p.kappa;
    }
  }
  return k;
}

void TrainingSet::add(const EnvPoint& x, double target) {
  if (!x.allFinite() || !std::isfinite(target)) throw std::invalid_argument("training point and target must be finite");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i] == x) {
      const int m = multiplicity_[i];
      targets_[i] = (targets_[i] * m + target) / (m + 1);
      multiplicity_[i] = m + 1;
      return;
    }
  }
  points_.push_back(x);
  targets_.push_back(target);
  multiplicity_.push_back(1);
}

bool TrainingSet::contains(const EnvPoint& x) const {
  for (const auto& p : points_) {
    if (p == x) return true;
  }
  return false;
}

Eigen::MatrixXd TrainingSet::point_matrix() const {
  if (points_.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points_.size()), points_.front().size());
  for (std::size_t i = 0; i < points_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points_[i].transpose();
  return m;
}

Eigen::VectorXd TrainingSet::target_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(targets_.data(), static_cast<Eigen::Index>(targets_.size()));
}

namespace {

Eigen::MatrixXd train_gram(const Eigen::MatrixXd& pts, const KernelParams& p) {
  Eigen::MatrixXd k = kernel_matrix(pts, pts, p);
  k.diagonal().array() += KernelParams::alpha_ng;
  return k;
}

double condition_number(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

}  // namespace

GpPosterior::GpPosterior(TrainingSet train, KernelParams params) : train_(std::move(train)), params_(params) {
  params_.validate();
  if (train_.empty()) throw std::invalid_argument("GP needs at least one training point");
  points_ = train_.point_matrix();
  const Eigen::MatrixXd k = train_gram(points_, params_);
  llt_.compute(k);
  if (llt_.info() != Eigen::Success) {
    std::ostringstream os;
    os << "GP factorization failed; condition number " << condition_number(k);
    throw std::runtime_error(os.str());
  }
  weights_ = llt_.solve(train_.target_vector());
}

double GpPosterior::clamp_variance(double v, double prior) const {
  if (v >= 0.0) return v;
  const double tol = 1e-12 + 1e-9 * prior;
  if (v > -tol) return 0.0;
  std::ostringstream os;
  os << "negative posterior variance " << v << " (prior " << prior << ")";
  throw std::runtime_error(os.str());
}

PosteriorPoint GpPosterior::posterior_at(const EnvPoint& x, const EnvPoint& y) const {
  Eigen::MatrixXd xy(2, x.size());
  xy.row(0) = x.transpose();
  xy.row(1) = y.transpose();
  const Eigen::MatrixXd kd = kernel_matrix(points_, xy, params_);
  const Eigen::MatrixXd v = llt_.matrixL().solve(kd);
  PosteriorPoint out;
  out.mean = kd.col(0).dot(weights_);
  out.cov = full_kernel(x, y, params_) - v.col(0).dot(v.col(1));
  if (x == y) out.cov = clamp_variance(out.cov, params_.prior_variance());
  return out;
}

double GpPosterior::mean(const EnvPoint& x) const { return posterior_at(x, x).mean; }

double GpPosterior::variance(const EnvPoint& x) const { return posterior_at(x, x).cov; }

Eigen::MatrixXd GpPosterior::whiten(const Eigen::MatrixXd& xs) const {
  return llt_.matrixL().solve(kernel_matrix(points_, xs, params_));
}

Prediction GpPosterior::predict(const Eigen::MatrixXd& xs) const {
  const Eigen::MatrixXd kd = kernel_matrix(points_, xs, params_);
  Prediction out;
  out.mean = kd.transpose() * weights_;
  const Eigen::MatrixXd v = llt_.matrixL().solve(kd);
  const double prior = params_.prior_variance();
  out.var = (prior - v.colwise().squaredNorm().array()).matrix().transpose();
  for (Eigen::Index i = 0; i < out.var.size(); ++i) out.var[i] = clamp_variance(out.var[i], prior);
  return out;
}

namespace {

// Reusable evaluator: pairwise distances are fixed during a fit.
class LmlEvaluator final {
 public:
  explicit LmlEvaluator(const TrainingSet& train) : w_(train.target_vector()) {
    const Eigen::MatrixXd pts = train.point_matrix();
    const Eigen::Index n = pts.rows();
    dist_.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) dist_(i, j) = (pts.row(i) - pts.row(j)).norm();
    }
  }

  double operator()(const KernelParams& p, Eigen::Vector4d* grad_log) const {
    const Eigen::Index n = dist_.rows();
    const double scale = p.c_kr * p.sigma2_mt;
    Eigen::MatrixXd km(n, n), dell(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) {
        const double u = dist_(i, j) / p.ell;
        const double e = std::exp(-kSqrt5 * u);
        km(i, j) = km(j, i) = scale * (1.0 + kSqrt5 * u + 5.0 / 3.0 * u * u) * e;
        dell(i, j) = dell(j, i) = scale * 5.0 / 3.0 * u * u * (1.0 + kSqrt5 * u) * e;
      }
    }
    Eigen::MatrixXd k = km;
    k.diagonal().array() += p.kappa + KernelParams::alpha_ng;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd a = llt.solve(w_);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double lml = -0.5 * w_.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (grad_log) {
      Eigen::MatrixXd wmat = llt.solve(Eigen::MatrixXd::Identity(n, n));
      wmat.noalias() -= a * a.transpose();
      // dLML/dtheta = -1/2 tr(W dK), W = K^{-1} - a a^T.
      const double t_scale = wmat.cwiseProduct(km).sum();
      const double t_ell = wmat.cwiseProduct(dell).sum();
      (*grad_log)[0] = -0.5 * t_scale;
      (*grad_log)[1] = -0.5 * t_ell;
      (*grad_log)[2] = -0.5 * t_scale;
      (*grad_log)[3] = -0.5 * p.kappa * wmat.trace();
    }
    return lml;
  }

 private:
  Eigen::VectorXd w_;
  Eigen::MatrixXd dist_;
};

}  // namespace

double log_marginal_likelihood(const TrainingSet& train, const KernelParams& params) {
  Eigen::Vector4d g;
  return log_marginal_likelihood(train, params, g);
}

double log_marginal_likelihood(const TrainingSet& train, const KernelParams& params, Eigen::Vector4d& grad_log) {
  if (train.empty()) throw std::invalid_argument("log marginal likelihood needs training data");
  params.validate();
  const double v = LmlEvaluator(train)(params, &grad_log);
  if (!std::isfinite(v)) throw std::runtime_error("kernel matrix is not positive definite");
  return v;
}

MleBounds MleBounds::for_diagonal(double diagonal) {
  MleBounds b;
  b.lower.sigma2_mt = 1e-4;
  b.upper.sigma2_mt = 1e4;
  b.lower.c_kr = 1e-4;
  b.upper.c_kr = 1e4;
  b.lower.ell = 1e-2 * diagonal;
  b.upper.ell = 10.0 * diagonal;
  b.lower.kappa = 1e-8;
  b.upper.kappa = 1e2;
  return b;
}

MleResult fit_mle(const TrainingSet& train, const KernelParams& init, bool warm_start, const MleBounds& bounds,
                  Rng& rng, const MleOptions& opts) {
  if (train.size() < 2) throw std::invalid_argument("MLE needs at least two training points");
  const LmlEvaluator lml(train);
  const Eigen::VectorXd lo = bounds.lower.to_log();
  const Eigen::VectorXd hi = bounds.upper.to_log();

  const Objective objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    Eigen::Vector4d g;
    const double v = lml(KernelParams::from_log(z), grad ? &g : nullptr);
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    if (grad) *grad = -g;
    return -v;
  };

  std::vector<Eigen::VectorXd> starts{init.to_log().cwiseMax(lo).cwiseMin(hi)};
  if (!warm_start) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int s = 1; s < opts.n_starts; ++s) {
      Eigen::VectorXd z(4);
      for (Eigen::Index k = 0; k < 4; ++k) z[k] = lo[k] + unif(rng) * (hi[k] - lo[k]);
      starts.push_back(z);
    }
  }

  BoxOptions box_opts;
  box_opts.max_iter = warm_start ? opts.max_iter_warm : opts.max_iter_cold;
  box_opts.gtol = 1e-5;
  box_opts.ftol = 1e-10;

  MleResult best;
  best.log_lik = -std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (const auto& z0 : starts) {
    const OptResult r = minimize_box(objective, z0, lo, hi, box_opts);
    best.evaluations += r.evaluations;
    any_converged = any_converged || r.converged;
    if (std::isfinite(r.value) && -r.value > best.log_lik) {
      best.log_lik = -r.value;
      best.params = KernelParams::from_log(r.x);
      best.converged = r.converged;
    }
  }
  if (!std::isfinite(best.log_lik)) {
    best.params = init;
    best.warning = true;
    return best;
  }
  best.warning = !any_converged;
  return best;
}

}  // namespace failprob
