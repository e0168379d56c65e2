#include "failprob/sampling.hpp"

#include "failprob/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace failprob {

std::vector<EnvPoint> FunctionProposal::sample(std::size_t n, Rng& rng) const {
  std::vector<EnvPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler_(rng));
  return out;
}

UniformSuperLevelProposal::UniformSuperLevelProposal(const GriddedField& cde_est, EnvGrid grid, double threshold)
    : grid_(std::move(grid)), member_(grid_.size(), false) {
  if (cde_est.values.size() != grid_.size()) throw std::invalid_argument("field dimensions do not match grid");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (cde_est.values[i] > threshold) {
      cells_.push_back(i);
      member_[i] = true;
    }
  }
  if (cells_.empty()) throw std::invalid_argument("super-level set is empty: threshold above the field maximum");
  area_ = static_cast<double>(cells_.size()) * grid_.cell_area();
}

double UniformSuperLevelProposal::density(const EnvPoint& x) const {
  const auto idx = grid_.index_of(x);
  return idx && member_[*idx] ? 1.0 / area_ : 0.0;
}

std::vector<EnvPoint> UniformSuperLevelProposal::sample(std::size_t n, Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, cells_.size() - 1);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::vector<EnvPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EnvPoint x = grid_.center(cells_[pick(rng)]);
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += unif(rng) * grid_.step(static_cast<std::size_t>(k));
    out.push_back(std::move(x));
  }
  return out;
}

UniformSuperLevelProposal gp_uniform_proposal(const GriddedField& cde_est, const EnvGrid& grid, double threshold) {
  return UniformSuperLevelProposal(cde_est, grid, threshold);
}

IsEstimate importance_estimate(Scenario& scenario, const FailureSpec& spec, const Proposal& proposal,
                               std::size_t n_is, std::size_t n_rl, bool use_exact, Rng& rng) {
  if (n_is < 1) throw std::invalid_argument("n_is must be at least 1");
  IsEstimate est;
  est.n_is = n_is;
  const auto draws = proposal.sample(n_is, rng);
  double sum = 0.0;
  for (const auto& x : draws) {
    if (!scenario.support().contains(x)) {
      est.weights.push_back(0.0);
      est.cond_probs.push_back(0.0);
      continue;
    }
    const double g = proposal.density(x);
    if (!(g > 0.0)) {
      std::ostringstream os;
      os << "proposal density is zero at a drawn point (" << x.transpose() << ")";
      throw std::runtime_error(os.str());
    }
    const double w = scenario.env_density(x) / g;
    const double p = cond_fail_prob(scenario, x, n_rl, spec, rng, use_exact);
    est.weights.push_back(w);
    est.cond_probs.push_back(p);
    sum += p * w;
  }
  est.p_hat = sum / static_cast<double>(n_is);
  double s1 = 0.0, s2 = 0.0;
  for (double w : est.weights) {
    s1 += w;
    s2 += w * w;
  }
  est.ess = s2 > 0.0 ? s1 * s1 / s2 : 0.0;
  est.flagged = !std::isfinite(est.p_hat) || est.ess <= 5.0;
  if (est.flagged) warn("importance sampling: effective sample size at or below 5");
  return est;
}

double maximin_score(const std::vector<EnvPoint>& design, const Box& box) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < design.size(); ++i) {
    for (std::size_t j = i + 1; j < design.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < box.dim(); ++k) {
        const double d = (design[i][k] - design[j][k]) / box[k].width();
        s += d * d;
      }
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

std::vector<EnvPoint> random_latin_hypercube(const Box& box, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("design size must be at least 1");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<EnvPoint> design(n, EnvPoint(static_cast<Eigen::Index>(box.dim())));
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < box.dim(); ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + unif(rng)) / static_cast<double>(n);
      design[i][static_cast<Eigen::Index>(k)] = box[k].lo + u * box[k].width();
    }
  }
  return design;
}

std::vector<EnvPoint> latin_hypercube(const Box& box, std::size_t n, Rng& rng, std::size_t n_candidates) {
  std::vector<EnvPoint> best;
  double best_score = -1.0;
  for (std::size_t c = 0; c < std::max<std::size_t>(n_candidates, 1); ++c) {
    auto design = random_latin_hypercube(box, n, rng);
    const double score = n > 1 ? maximin_score(design, box) : 0.0;
    if (score > best_score) {
      best_score = score;
      best = std::move(design);
    }
  }
  return best;
}

}  // namespace failprob
