#pragma once

#include "failprob/core.hpp"

#include <functional>
#include <iosfwd>

namespace failprob {

using LogTarget = std::function<double(const EnvPoint&)>;

struct PtConfig final {
  std::size_t n_chains = 5;
  std::size_t n_steps = 400;
  double t_min = 1.0;
  double t_max = 20.0;
  double sigma_mh = 1.0;
  std::size_t swap_interval = 10;
  bool adapt = true;
  double gain_t0 = 100.0;
  double target_accept = 0.234;
  double freeze_fraction = 0.5;

  void validate() const;
  std::vector<double> initial_ladder() const;
};

struct ChainRecord final {
  std::size_t step = 0;
  std::size_t chain = 0;
  double temp = 1.0;
  EnvPoint x;
  double logpost = 0.0;
  bool accepted = false;
};

struct PtSample final {
  Eigen::MatrixXd cold;  // n_steps x d, row 0 is the initial state
  std::vector<double> cold_logpost;
  std::vector<double> ladder;
  std::vector<double> accept_rate;
  std::vector<double> swap_rate;
  std::vector<double> sigma;
  std::size_t burn_in = 0;
  bool burn_in_fallback = false;
  std::uint64_t target_evals = 0;
  std::vector<ChainRecord> records;  // filled only when requested
};

double mh_accept_prob(double log_current, double log_proposed, double temperature);
double swap_accept_prob(double log_pi_i, double log_pi_j, double t_i, double t_j);

// Reflects a coordinate back into [lo, hi].
double reflect_into(double v, double lo, double hi);

PtSample pt_sample(const LogTarget& target, const Box& box, const PtConfig& config, Rng& rng,
                   bool keep_records = false);

struct GewekeResult final {
  std::size_t index = 0;
  bool qualified = false;
};

double spectral_density_zero(const Eigen::VectorXd& series);
double geweke_z(const Eigen::VectorXd& series, double first = 0.1, double last = 0.5);
// Smallest 10%-granularity discard whose retained chain passes |z| < 2 in every coordinate;
// index = n_steps when none qualifies.
GewekeResult geweke_burnin(const Eigen::MatrixXd& chain);

void write_chain_csv(std::ostream& os, const std::vector<ChainRecord>& records);

}  // namespace failprob
