#include "failprob/monopile.hpp"

namespace failprob {

MonopileScenario::MonopileScenario(std::shared_ptr<const ResponseGrid> responses,
                                   std::shared_ptr<const GriddedDensity> density)
    : responses_(std::move(responses)), density_(std::move(density)) {
  if (!responses_ || !density_) throw std::invalid_argument("monopile scenario needs responses and a density");
  if (responses_->maxima.size() != density_->values.size())
    throw std::invalid_argument("response grid and density grid differ");
}

std::size_t MonopileScenario::cell_of(const EnvPoint& x) const {
  const auto idx = density_->grid.index_of(x);
  if (!idx) throw std::out_of_range("point outside the monopile grid");
  return *idx;
}

std::optional<double> MonopileScenario::exact_cond_fail_prob(const EnvPoint& x, double r_cr) const {
  if (!density_->grid.box().contains(x)) return 0.0;
  return responses_->exceedance(cell_of(x), r_cr);
}

std::unique_ptr<Scenario> MonopileScenario::clone() const {
  return std::make_unique<MonopileScenario>(responses_, density_);
}

void MonopileScenario::draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) {
  const auto& m = responses_->maxima[cell_of(x)];
  std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
  for (double& v : out) v = m[pick(rng)];
}

GriddedField monopile_cde(const ResponseGrid& responses, const GriddedDensity& density, double r_cr) {
  GriddedField out{density.grid.counts(), std::vector<double>(density.values.size(), 0.0)};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (density.values[i] > 0.0) out.values[i] = responses.exceedance(i, r_cr) * density.values[i];
  }
  return out;
}

}  // namespace failprob
