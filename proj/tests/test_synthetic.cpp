#include "failprob/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace failprob;
using testing::pt;

TEST_SUITE("synthetic") {
  TEST_CASE("scale at the two peaks") {
    const SyntheticParams p;
    CHECK(eta(pt(5, 5), p) == doctest::Approx(100 * (1.3 * 0.5 + 1.5 * 15 * std::sqrt(2.0))).epsilon(1e-12));
    CHECK(eta(pt(5, 5), p) == doctest::Approx(3246.9).epsilon(1e-4));
    CHECK(eta(pt(20, 20), p) == doctest::Approx(2832.7).epsilon(1e-4));
    Rng rng(2);
    std::uniform_real_distribution<double> u(0, 30);
    for (int i = 0; i < 1000; ++i) CHECK(eta(pt(u(rng), u(rng)), p) >= p.c * (p.a + p.b) * p.nu_peak);
  }

  TEST_CASE("noise-free perturbation is the identity") {
    SyntheticParams p;
    p.delta = 0.0;
    Rng rng(1);
    const EnvPoint x = pt(3, 7);
    CHECK(eta_noisy(x, p, rng) == eta(x, p));
  }

  TEST_CASE("noisy scale moments") {
    SyntheticParams p;
    p.delta = 0.05;
    Rng rng(9);
    const EnvPoint x = pt(12, 4);
    const double e = eta(x, p);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double v = eta_noisy(x, p, rng);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean - e) < 0.01 * e);
    CHECK(std::abs(sd - 0.05 * e) < 0.05 * 0.05 * e);
  }

  TEST_CASE("negative tail clamps") {
    const SyntheticParams p;
    const EnvPoint x = pt(1, 1);
    CHECK(eta_perturbed(x, p, -1.2) == doctest::Approx(1e-6 * eta(x, p)));
    CHECK(eta_perturbed(x, p, 0.1) == doctest::Approx(1.1 * eta(x, p)));
  }

  TEST_CASE("Weibull exceedance") {
    const SyntheticParams p;
    const EnvPoint x = pt(8, 2);
    CHECK(weibull_exceed(x, 0.0, p) == 1.0);
    CHECK(weibull_exceed(x, eta(x, p), p) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    double prev = 1.1;
    for (double r = 0; r < 20000; r += 500) {
      const double v = weibull_exceed(x, r, p);
      CHECK(v < prev);
      prev = v;
    }
    // larger scale, larger exceedance
    SyntheticParams q = p;
    q.c = 200;
    CHECK(weibull_exceed(x, 3000, q) > weibull_exceed(x, 3000, p));
  }

  TEST_CASE("environment density") {
    CHECK(synth_env_density(pt(0, 1)) == 0.0);
    CHECK(synth_env_density(pt(1, -1)) == 0.0);
    CHECK(synth_env_density(pt(-1, 2)) == 0.0);
    // hand evaluation of the Rayleigh x log-normal product
    const double x1 = 1.5, x2 = 4.0;
    const double mu = 0.933 + 0.578 * std::pow(x1, 0.395);
    const double sig = 0.055 + 0.336 + std::exp(-0.585 * x1);
    const double ln = std::exp(-std::pow(std::log(x2) - mu, 2) / (2 * sig * sig)) / (x2 * sig * std::sqrt(2 * M_PI));
    CHECK(synth_env_density(pt(x1, x2)) == doctest::Approx(2 * x1 * std::exp(-x1 * x1) * ln).epsilon(1e-12));
    const double sig_p = 0.055 + 0.336 * std::exp(-0.585 * x1);
    const double ln_p =
        std::exp(-std::pow(std::log(x2) - mu, 2) / (2 * sig_p * sig_p)) / (x2 * sig_p * std::sqrt(2 * M_PI));
    CHECK(synth_env_density(pt(x1, x2), SigmaVariant::product) ==
          doctest::Approx(2 * x1 * std::exp(-x1 * x1) * ln_p).epsilon(1e-12));
  }

  TEST_CASE("Rayleigh marginal has its mode at 1/sqrt 2") {
    // integrate out x2 over log x2 in [-20, 20], essentially the whole line
    auto marginal = [](double x1) {
      double s = 0;
      const int n = 40000;
      const double h = 40.0 / n;
      for (int i = 0; i < n; ++i) {
        const double x2 = std::exp(-20 + (i + 0.5) * h);
        s += synth_env_density(pt(x1, x2)) * x2 * h;
      }
      return s;
    };
    CHECK(marginal(1.3) == doctest::Approx(2 * 1.3 * std::exp(-1.69)).epsilon(1e-6));
    const double m = 1 / std::sqrt(2.0);
    const double d_lo = marginal(m) - marginal(m - 0.01);
    const double d_hi = marginal(m + 0.01) - marginal(m);
    CHECK(d_lo > 0);
    CHECK(d_hi < 0);
  }

  TEST_CASE("response draws follow the Weibull law") {
    SyntheticParams p;
    p.delta = 0.0;
    Rng rng(4);
    const EnvPoint x = pt(6, 9);
    const std::size_t n = 100000;
    auto draws = sample_synth_response(x, n, p, rng);
    const double r = 0.8 * eta(x, p);
    const double emp = std::count_if(draws.begin(), draws.end(), [&](double v) { return v > r; }) / double(n);
    const double exact = weibull_exceed(x, r, p);
    CHECK(std::abs(emp - exact) < 3 * testing::binomial_se(exact, n));
    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    CHECK(draws[n / 2] == doctest::Approx(eta(x, p) * std::sqrt(std::log(2.0))).epsilon(0.01));
  }

  TEST_CASE("scenario counts and exact probability") {
    SyntheticScenario s(SyntheticParams{});
    Rng rng(1);
    s.sample_response(pt(2, 2), 250, rng);
    CHECK(s.counter().draws() == 250);
    CHECK(s.exact_cond_fail_prob(pt(2, 2), 175).value() == weibull_exceed(pt(2, 2), 175, s.params()));
    CHECK(s.env_density(pt(2, 2)) == synth_env_density(pt(2, 2)));
  }

  TEST_CASE("replicate-level noise is shared within a replicate") {
    SyntheticParams p;
    p.delta = 0.05;
    p.noise_per = NoisePer::replicate;
    SyntheticScenario s(p);
    Rng rng(8);
    s.begin_replicate(rng);
    const double eps = s.replicate_eps();
    CHECK(eps != 0.0);
    const auto v = s.sample_response(pt(4, 4), 50000, rng);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    const double scale = eta_perturbed(pt(4, 4), p, eps);
    CHECK(mean == doctest::Approx(scale * std::tgamma(1.5)).epsilon(0.01));
  }

  TEST_CASE("invalid parameters") {
    SyntheticParams p;
    p.a = -1;
    CHECK_THROWS(p.validate());
    p = SyntheticParams{};
    p.delta = -0.1;
    CHECK_THROWS(SyntheticScenario{p});
  }
}
