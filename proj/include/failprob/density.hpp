#pragma once

#include "failprob/core.hpp"

namespace failprob {

// Per-dimension n^{-1/(d+4)} * sample standard deviation.
Eigen::VectorXd scott_bandwidth(const Eigen::MatrixXd& sample);

// Diagonal Gaussian KDE truncated to a box and renormalized by its in-box mass.
class KdeModel final {
 public:
  KdeModel(Eigen::MatrixXd sample, Box support);
  KdeModel(Eigen::MatrixXd sample, Box support, Eigen::VectorXd bandwidth);

  double density(const EnvPoint& x) const;
  std::vector<EnvPoint> sample(std::size_t n, Rng& rng) const;

  const Eigen::MatrixXd& data() const { return data_; }
  const Eigen::VectorXd& bandwidth() const { return bandwidth_; }
  const Box& support() const { return support_; }
  double in_box_mass() const { return in_box_mass_; }

 private:
  Eigen::MatrixXd data_;
  Box support_;
  Eigen::VectorXd bandwidth_;
  double in_box_mass_ = 1.0;
  double norm_const_ = 1.0;
};

double kde_density(const KdeModel& model, const EnvPoint& x);
std::vector<EnvPoint> kde_sample(const KdeModel& model, std::size_t n, Rng& rng);

}  // namespace failprob
