#pragma once

#include "failprob/mcmc.hpp"
#include "failprob/quadrature.hpp"
#include "failprob/sampling.hpp"

namespace failprob {

struct IsptConfig final {
  PtConfig pt;
  std::size_t n_is = 100;
  std::size_t n_rl = 1000;
  bool use_exact = true;
  TargetFloor floor;
  double bandwidth_scale = 1.0;  // multiplies the Scott bandwidth

  void validate() const;
};

struct IsptResult final {
  PtSample pt;
  Eigen::VectorXd bandwidth;
  IsEstimate estimate;
  std::uint64_t units = 0;
  std::uint64_t draws = 0;
};

IsptResult ispt_run(Scenario& scenario, const FailureSpec& spec, const IsptConfig& config, Rng& rng,
                    bool keep_records = false);

}  // namespace failprob
