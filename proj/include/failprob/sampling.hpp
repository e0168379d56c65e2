#pragma once

#include "failprob/core.hpp"
#include "failprob/density.hpp"

#include <functional>

namespace failprob {

class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual double density(const EnvPoint& x) const = 0;
  virtual std::vector<EnvPoint> sample(std::size_t n, Rng& rng) const = 0;
};

class KdeProposal final : public Proposal {
 public:
  explicit KdeProposal(KdeModel model) : model_(std::move(model)) {}
  double density(const EnvPoint& x) const override { return model_.density(x); }
  std::vector<EnvPoint> sample(std::size_t n, Rng& rng) const override { return model_.sample(n, rng); }
  const KdeModel& model() const { return model_; }

 private:
  KdeModel model_;
};

class FunctionProposal final : public Proposal {
 public:
  using DensityFn = std::function<double(const EnvPoint&)>;
  using SamplerFn = std::function<EnvPoint(Rng&)>;
  FunctionProposal(DensityFn density, SamplerFn sampler) : density_(std::move(density)), sampler_(std::move(sampler)) {}
  double density(const EnvPoint& x) const override { return density_(x); }
  std::vector<EnvPoint> sample(std::size_t n, Rng& rng) const override;

 private:
  DensityFn density_;
  SamplerFn sampler_;
};

// Uniform over grid cells whose estimated CDE exceeds a threshold.
class UniformSuperLevelProposal final : public Proposal {
 public:
  UniformSuperLevelProposal(const GriddedField& cde_est, EnvGrid grid, double threshold);
  double density(const EnvPoint& x) const override;
  std::vector<EnvPoint> sample(std::size_t n, Rng& rng) const override;
  double area() const { return area_; }

 private:
  EnvGrid grid_;
  std::vector<std::size_t> cells_;
  std::vector<bool> member_;
  double area_ = 0.0;
};

UniformSuperLevelProposal gp_uniform_proposal(const GriddedField& cde_est, const EnvGrid& grid, double threshold);

struct IsEstimate final {
  double p_hat = 0.0;
  std::vector<double> weights;  // f_X / g at each draw
  std::vector<double> cond_probs;
  std::size_t n_is = 0;
  double ess = 0.0;
  bool flagged = false;
};

// (1/n) sum P(R > r | x_i) f_X(x_i) / g(x_i); draws outside the scenario support contribute zero.
IsEstimate importance_estimate(Scenario& scenario, const FailureSpec& spec, const Proposal& proposal,
                               std::size_t n_is, std::size_t n_rl, bool use_exact, Rng& rng);

double maximin_score(const std::vector<EnvPoint>& design, const Box& box);
// Random LHS, best maximin score among n_candidates designs.
std::vector<EnvPoint> latin_hypercube(const Box& box, std::size_t n, Rng& rng, std::size_t n_candidates = 20);
std::vector<EnvPoint> random_latin_hypercube(const Box& box, std::size_t n, Rng& rng);

}  // namespace failprob
