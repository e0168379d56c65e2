#pragma once

#include "failprob/extremes.hpp"
#include "failprob/waves.hpp"

namespace failprob {

// Environment density from the gridded estimate, responses resampled from each cell's simulated maxima.
class MonopileScenario final : public Scenario {
 public:
  MonopileScenario(std::shared_ptr<const ResponseGrid> responses, std::shared_ptr<const GriddedDensity> density);

  const Box& support() const override { return density_->grid.box(); }
  double env_density(const EnvPoint& x) const override { return density_->at(x); }
  bool has_exact() const override { return true; }
  std::optional<double> exact_cond_fail_prob(const EnvPoint& x, double r_cr) const override;
  std::unique_ptr<Scenario> clone() const override;
  std::string name() const override { return "monopile"; }

  const ResponseGrid& responses() const { return *responses_; }
  const GriddedDensity& density() const { return *density_; }

 protected:
  void draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) override;

 private:
  std::size_t cell_of(const EnvPoint& x) const;

  std::shared_ptr<const ResponseGrid> responses_;
  std::shared_ptr<const GriddedDensity> density_;
};

// Brute-force CDE on the density grid: (1 - F(r | cell)) * density.
GriddedField monopile_cde(const ResponseGrid& responses, const GriddedDensity& density, double r_cr);

}  // namespace failprob
