#include "failprob/density.hpp"

#include <cmath>
#include <numbers>

namespace failprob {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

Eigen::VectorXd scott_bandwidth(const Eigen::MatrixXd& sample) {
  const Eigen::Index n = sample.rows();
  const Eigen::Index d = sample.cols();
  if (n < 2) throw std::invalid_argument("bandwidth needs at least two sample points");
  const Eigen::RowVectorXd mean = sample.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((sample.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1)).array().sqrt();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(sd[k] > 0.0)) throw std::invalid_argument("degenerate sample: zero variance in a dimension");
  }
  const double factor = std::pow(static_cast<double>(n), -1.0 / static_cast<double>(d + 4));
  return factor * sd.transpose();
}

KdeModel::KdeModel(Eigen::MatrixXd sample, Box support)
    : KdeModel(sample, std::move(support), scott_bandwidth(sample)) {}

KdeModel::KdeModel(Eigen::MatrixXd sample, Box support, Eigen::VectorXd bandwidth)
    : data_(std::move(sample)), support_(std::move(support)), bandwidth_(std::move(bandwidth)) {
  if (data_.rows() < 1) throw std::invalid_argument("KDE needs data");
  if (static_cast<std::size_t>(data_.cols()) != support_.dim() || bandwidth_.size() != data_.cols())
    throw std::invalid_argument("KDE dimensions disagree");
  if (!(bandwidth_.array() > 0.0).all()) throw std::invalid_argument("KDE bandwidths must be positive");
  double mass = 0.0;
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    double m = 1.0;
    for (Eigen::Index k = 0; k < data_.cols(); ++k) {
      const double h = bandwidth_[k];
      m *= normal_cdf((support_[k].hi - data_(i, k)) / h) - normal_cdf((support_[k].lo - data_(i, k)) / h);
    }
    mass += m;
  }
  in_box_mass_ = mass / static_cast<double>(data_.rows());
  if (!(in_box_mass_ > 0.0)) throw std::invalid_argument("KDE has no mass inside its support box");
  norm_const_ = 1.0 / (static_cast<double>(data_.rows()) * in_box_mass_ *
                       std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(data_.cols())) * bandwidth_.prod());
}

double KdeModel::density(const EnvPoint& x) const {
  if (!support_.contains(x)) return 0.0;
  const Eigen::RowVectorXd inv_h = bandwidth_.cwiseInverse().transpose();
  double s = 0.0;
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    const double q = ((x.transpose() - data_.row(i)).cwiseProduct(inv_h)).squaredNorm();
    s += std::exp(-0.5 * q);
  }
  return s * norm_const_;
}

std::vector<EnvPoint> KdeModel::sample(std::size_t n, Rng& rng) const {
  std::uniform_int_distribution<Eigen::Index> pick(0, data_.rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<EnvPoint> out;
  out.reserve(n);
  int rejections = 0;
  while (out.size() < n) {
    const Eigen::Index i = pick(rng);
    EnvPoint x(data_.cols());
    for (Eigen::Index k = 0; k < data_.cols(); ++k) x[k] = data_(i, k) + bandwidth_[k] * normal(rng);
    if (support_.contains(x)) {
      out.push_back(std::move(x));
      rejections = 0;
    } else if (++rejections > 10000) {
      throw std::runtime_error("KDE sampling: more than 1e4 consecutive rejections against the support box");
    }
  }
  return out;
}

double kde_density(const KdeModel& model, const EnvPoint& x) { return model.density(x); }

std::vector<EnvPoint> kde_sample(const KdeModel& model, std::size_t n, Rng& rng) { return model.sample(n, rng); }

}  // namespace failprob
