#include "failprob/ispt.hpp"

#include "failprob/log.hpp"

namespace failprob {

void IsptConfig::validate() const {
  pt.validate();
  if (n_is < 1) throw std::invalid_argument("n_is must be at least 1");
  if (n_rl < 1) throw std::invalid_argument("n_rl must be at least 1");
  if (!(bandwidth_scale > 0.0)) throw std::invalid_argument("bandwidth scale must be positive");
}

IsptResult ispt_run(Scenario& scenario, const FailureSpec& spec, const IsptConfig& config, Rng& rng,
                    bool keep_records) {
  config.validate();
  const std::uint64_t units0 = scenario.counter().units();
  const std::uint64_t draws0 = scenario.counter().draws();
  const LogTarget target = [&](const EnvPoint& x) {
    const double p = cond_fail_prob(scenario, x, config.n_rl, spec, rng, config.use_exact);
    return log_cde_target(p, scenario.env_density(x), config.n_rl, config.floor);
  };

  IsptResult res;
  res.pt = pt_sample(target, scenario.support(), config.pt, rng, keep_records);
  if (res.pt.burn_in_fallback) warn("Geweke diagnostic found no stationary prefix; discarding the first half");
  const auto start = static_cast<Eigen::Index>(res.pt.burn_in);
  const Eigen::MatrixXd retained = res.pt.cold.bottomRows(res.pt.cold.rows() - start);
  KdeModel kde(retained, scenario.support(), scott_bandwidth(retained) * config.bandwidth_scale);
  res.bandwidth = kde.bandwidth();
  const KdeProposal proposal(std::move(kde));
  res.estimate = importance_estimate(scenario, spec, proposal, config.n_is, config.n_rl, config.use_exact, rng);
  res.units = scenario.counter().units() - units0;
  res.draws = scenario.counter().draws() - draws0;
  return res;
}

}  // namespace failprob
