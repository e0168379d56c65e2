#pragma once

#include "failprob/core.hpp"

namespace failprob {

enum class SigmaVariant { verbatim, product };
enum class NoisePer { draw, replicate };

struct SyntheticParams final {
  double k = 2.0;
  double a = 1.3;
  double b = 1.5;
  double c = 100.0;
  double nu_peak = 0.5;
  EnvPoint peak1 = EnvPoint::Constant(2, 5.0);
  EnvPoint peak2 = EnvPoint::Constant(2, 20.0);
  double delta = 0.0;
  double r_cr = 175.0;
  SigmaVariant sigma_variant = SigmaVariant::verbatim;
  NoisePer noise_per = NoisePer::draw;
  Box box = Box({{0.0, 30.0}, {0.0, 30.0}});

  void validate() const;
};

double eta(const EnvPoint& x, const SyntheticParams& p);
// eta scaled by (1 + eps), clamped below at 1e-6 * eta.
double eta_perturbed(const EnvPoint& x, const SyntheticParams& p, double eps);
double eta_noisy(const EnvPoint& x, const SyntheticParams& p, Rng& rng);
double weibull_exceed(const EnvPoint& x, double r, const SyntheticParams& p);
double synth_env_density(const EnvPoint& x, SigmaVariant variant = SigmaVariant::verbatim);
EnvPoint sample_synth_env(SigmaVariant variant, Rng& rng);
std::vector<double> sample_synth_response(const EnvPoint& x, std::size_t n, const SyntheticParams& p, Rng& rng);

class SyntheticScenario final : public Scenario {
 public:
  explicit SyntheticScenario(SyntheticParams params);

  const Box& support() const override { return params_.box; }
  double env_density(const EnvPoint& x) const override;
  bool has_exact() const override { return true; }
  std::optional<double> exact_cond_fail_prob(const EnvPoint& x, double r_cr) const override;
  std::unique_ptr<Scenario> clone() const override;
  std::string name() const override { return "synthetic"; }

  // Redraws the replicate-level scale noise (noise_per = replicate only).
  void begin_replicate(Rng& rng);
  const SyntheticParams& params() const { return params_; }
  double replicate_eps() const { return replicate_eps_; }

 protected:
  void draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) override;

 private:
  SyntheticParams params_;
  double replicate_eps_ = 0.0;
};

}  // namespace failprob
