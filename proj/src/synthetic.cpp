#include "failprob/synthetic.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <numbers>

namespace failprob {

void SyntheticParams::validate() const {
  if (!(a > 0 && b > 0 && c > 0 && nu_peak > 0)) throw std::invalid_argument("A, B, C and nu_peak must be positive");
  if (!(k > 0)) throw std::invalid_argument("Weibull shape must be positive");
  if (!(delta >= 0)) throw std::invalid_argument("delta must be nonnegative");
  if (peak1.size() != 2 || peak2.size() != 2) throw std::invalid_argument("peaks must be 2-D");
  if (box.dim() != 2) throw std::invalid_argument("synthetic box must be 2-D");
}

double eta(const EnvPoint& x, const SyntheticParams& p) {
  const double d1 = (x - p.peak1).norm();
  const double d2 = (x - p.peak2).norm();
  return p.c * (p.a * std::max(d1, p.nu_peak) + p.b * std::max(d2, p.nu_peak));
}

double eta_perturbed(const EnvPoint& x, const SyntheticParams& p, double eps) {
  const double base = eta(x, p);
  return std::max(base * (1.0 + eps), 1e-6 * base);
}

double eta_noisy(const EnvPoint& x, const SyntheticParams& p, Rng& rng) {
  if (p.delta == 0.0) return eta(x, p);
  std::normal_distribution<double> noise(0.0, p.delta);
  return eta_perturbed(x, p, noise(rng));
}

double weibull_exceed(const EnvPoint& x, double r, const SyntheticParams& p) {
  if (r <= 0.0) return 1.0;
  return std::exp(-std::pow(r / eta(x, p), p.k));
}

namespace {

double lognormal_mu(double x1) { return 0.933 + 0.578 * std::pow(x1, 0.395); }

double lognormal_sigma(double x1, SigmaVariant variant) {
  if (variant == SigmaVariant::product) return 0.055 + 0.336 * std::exp(-0.585 * x1);
  return 0.055 + 0.336 + std::exp(-0.585 * x1);
}

}  // namespace

double synth_env_density(const EnvPoint& x, SigmaVariant variant) {
  const double x1 = x[0];
  const double x2 = x[1];
  if (!(x1 > 0.0) || !(x2 > 0.0)) return 0.0;
  const double rayleigh = 2.0 * x1 * std::exp(-x1 * x1);
  const double mu = lognormal_mu(x1);
  const double sigma = lognormal_sigma(x1, variant);
  const double z = (std::log(x2) - mu) / sigma;
  const double lognormal = std::exp(-0.5 * z * z) / (x2 * sigma * std::sqrt(2.0 * std::numbers::pi));
  return rayleigh * lognormal;
}

EnvPoint sample_synth_env(SigmaVariant variant, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  EnvPoint x(2);
  x[0] = std::sqrt(-std::log(1.0 - unif(rng)));
  x[1] = std::exp(lognormal_mu(x[0]) + lognormal_sigma(x[0], variant) * normal(rng));
  return x;
}

std::vector<double> sample_synth_response(const EnvPoint& x, std::size_t n, const SyntheticParams& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& r : out) {
    const double scale = eta_noisy(x, p, rng);
    r = scale * std::pow(-std::log(1.0 - unif(rng)), 1.0 / p.k);
  }
  return out;
}

SyntheticScenario::SyntheticScenario(SyntheticParams params) : params_(std::move(params)) { params_.validate(); }

double SyntheticScenario::env_density(const EnvPoint& x) const {
  return synth_env_density(x, params_.sigma_variant);
}

std::optional<double> SyntheticScenario::exact_cond_fail_prob(const EnvPoint& x, double r_cr) const {
  if (params_.delta == 0.0) return weibull_exceed(x, r_cr, params_);
  auto exceed_at = [&](double eps) {
    if (r_cr <= 0.0) return 1.0;
    return std::exp(-std::pow(r_cr / eta_perturbed(x, params_, eps), params_.k));
  };
  if (params_.noise_per == NoisePer::replicate) return exceed_at(replicate_eps_);
  const double sd = params_.delta;
  const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  auto integrand = [&](double eps) { return exceed_at(eps) * norm * std::exp(-0.5 * (eps / sd) * (eps / sd)); };
  using Rule = boost::math::quadrature::gauss<double, 30>;
  double total = 0.0;
  constexpr int pieces = 8;
  for (int j = 0; j < pieces; ++j) {
    const double lo = -8.0 * sd + 16.0 * sd * j / pieces;
    total += Rule::integrate(integrand, lo, lo + 16.0 * sd / pieces);
  }
  return total;
}

std::unique_ptr<Scenario> SyntheticScenario::clone() const {
  auto copy = std::make_unique<SyntheticScenario>(params_);
  copy->replicate_eps_ = replicate_eps_;
  return copy;
}

void SyntheticScenario::begin_replicate(Rng& rng) {
  if (params_.noise_per != NoisePer::replicate || params_.delta == 0.0) return;
  std::normal_distribution<double> noise(0.0, params_.delta);
  replicate_eps_ = noise(rng);
}

void SyntheticScenario::draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, params_.delta > 0 ? params_.delta : 1.0);
  const double base = eta(x, params_);
  for (auto& r : out) {
    double scale = base;
    if (params_.delta > 0.0) {
      const double eps = params_.noise_per == NoisePer::draw ? noise(rng) : replicate_eps_;
      scale = std::max(base * (1.0 + eps), 1e-6 * base);
    }
    r = scale * std::pow(-std::log(1.0 - unif(rng)), 1.0 / params_.k);
  }
}

}  // namespace failprob
