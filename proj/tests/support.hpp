#pragma once

#include "failprob/core.hpp"

#include <cmath>
#include <functional>

namespace testing {

using failprob::Box;
using failprob::EnvPoint;
using failprob::Rng;

inline EnvPoint pt(double a, double b) {
  EnvPoint x(2);
  x << a, b;
  return x;
}

// Scenario assembled from callables; exact value optional.
class FnScenario final : public failprob::Scenario {
 public:
  using Draw = std::function<double(const EnvPoint&, Rng&)>;
  using Density = std::function<double(const EnvPoint&)>;
  using Exact = std::function<double(const EnvPoint&, double)>;

  FnScenario(Box box, Draw draw, Density density, Exact exact = {})
      : box_(std::move(box)), draw_(std::move(draw)), density_(std::move(density)), exact_(std::move(exact)) {}

  const Box& support() const override { return box_; }
  double env_density(const EnvPoint& x) const override { return box_.contains(x) ? density_(x) : 0.0; }
  bool has_exact() const override { return static_cast<bool>(exact_); }
  std::optional<double> exact_cond_fail_prob(const EnvPoint& x, double r) const override {
    if (!exact_) return std::nullopt;
    return exact_(x, r);
  }
  std::unique_ptr<failprob::Scenario> clone() const override { return std::make_unique<FnScenario>(*this); }
  std::string name() const override { return "fn"; }

 protected:
  void draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) override {
    for (double& v : out) v = draw_(x, rng);
  }

 private:
  Box box_;
  Draw draw_;
  Density density_;
  Exact exact_;
};

inline double binomial_se(double p, double n) { return std::sqrt(std::max(p * (1 - p), 1e-300) / n); }

}  // namespace testing
