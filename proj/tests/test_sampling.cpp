#include "failprob/sampling.hpp"
#include "failprob/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace failprob;
using testing::FnScenario;
using testing::pt;

namespace {

struct Moments {
  double mean = 0;
  double se = 0;
};

Moments moments(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1) / n)};
}

}  // namespace

TEST_SUITE("sampling") {
  TEST_CASE("environment density as proposal is unbiased") {
    SyntheticScenario s(SyntheticParams{});
    const EnvGrid g(Box({{0, 30}, {0, 30}}), {300, 300});
    Rng brng(1);
    const double truth = failure_prob_quadrature(cde_brute_force(s, g, 1, FailureSpec{175}, brng), g);
    const FunctionProposal prop([](const EnvPoint& x) { return synth_env_density(x); },
                                [](Rng& rng) { return sample_synth_env(SigmaVariant::verbatim, rng); });
    std::vector<double> est;
    for (std::uint64_t r = 0; r < 200; ++r) {
      Rng rng = make_stream(3, r);
      est.push_back(importance_estimate(s, FailureSpec{175}, prop, 100, 1, true, rng).p_hat);
    }
    const Moments m = moments(est);
    CHECK(std::abs(m.mean - truth) < 3 * m.se);
  }

  TEST_CASE("proposal proportional to the CDE has zero variance") {
    const Box box({{0, 2}, {0, 1}});
    auto cell = [](const EnvPoint& x) { return x[0] < 1 ? 0 : 1; };
    FnScenario s(box, [](const EnvPoint&, Rng&) { return 0.0; }, [](const EnvPoint&) { return 0.5; },
                 [&](const EnvPoint& x, double) { return cell(x) == 0 ? 0.1 : 0.3; });
    // CDE is 0.05 then 0.15, total 0.2
    const FunctionProposal prop([&](const EnvPoint& x) { return cell(x) == 0 ? 0.25 : 0.75; },
                                [](Rng& rng) {
                                  std::uniform_real_distribution<double> u(0, 1);
                                  const double off = u(rng) < 0.75 ? 1.0 : 0.0;
                                  return pt(off + u(rng), u(rng));
                                });
    for (std::uint64_t r = 0; r < 20; ++r) {
      Rng rng = make_stream(9, r);
      CHECK(std::abs(importance_estimate(s, FailureSpec{0}, prop, 50, 1, true, rng).p_hat - 0.2) < 1e-12);
    }
  }

  TEST_CASE("two valid proposals agree") {
    SyntheticParams sp;
    SyntheticScenario s(sp);
    const Box& box = s.support();
    const FunctionProposal env([](const EnvPoint& x) { return synth_env_density(x); },
                               [](Rng& rng) { return sample_synth_env(SigmaVariant::verbatim, rng); });
    // broad product proposal covering the bulk of the density
    auto dens = [](const EnvPoint& x) {
      if (x[0] <= 0 || x[1] <= 0) return 0.0;
      return (x[0] * std::exp(-x[0] * x[0] / 2)) * (std::exp(-x[1] / 6) / 6);
    };
    const FunctionProposal broad(
        [=](const EnvPoint& x) { return box.contains(x) ? dens(x) : 0.0; },
        [](Rng& rng) {
          std::uniform_real_distribution<double> u(0, 1);
          return pt(std::sqrt(-2 * std::log(1 - u(rng))), -6 * std::log(1 - u(rng)));
        });
    std::vector<double> a, b;
    for (std::uint64_t r = 0; r < 200; ++r) {
      Rng ra = make_stream(11, r), rb = make_stream(12, r);
      a.push_back(importance_estimate(s, FailureSpec{175}, env, 100, 1, true, ra).p_hat);
      b.push_back(importance_estimate(s, FailureSpec{175}, broad, 100, 1, true, rb).p_hat);
    }
    const Moments ma = moments(a), mb = moments(b);
    CHECK(ma.mean + 3 * ma.se >= mb.mean - 3 * mb.se);
    CHECK(mb.mean + 3 * mb.se >= ma.mean - 3 * ma.se);
  }

  TEST_CASE("weights, effective sample size and budget") {
    SyntheticScenario s(SyntheticParams{});
    const Box box({{0, 10}, {0, 10}});
    const FunctionProposal uni([](const EnvPoint&) { return 0.01; },
                               [](Rng& rng) {
                                 std::uniform_real_distribution<double> u(0, 10);
                                 return pt(u(rng), u(rng));
                               });
    Rng rng(4);
    const IsEstimate e = importance_estimate(s, FailureSpec{175}, uni, 100, 20, false, rng);
    CHECK(s.counter().units() == 100);
    CHECK(s.counter().draws() == 2000);
    REQUIRE(e.weights.size() == 100);
    double s1 = 0, s2 = 0, sum = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK(e.weights[i] >= 0);
      s1 += e.weights[i];
      s2 += e.weights[i] * e.weights[i];
      sum += e.weights[i] * e.cond_probs[i];
    }
    CHECK(e.ess == doctest::Approx(s1 * s1 / s2).epsilon(1e-12));
    CHECK(e.p_hat == doctest::Approx(sum / 100).epsilon(1e-12));
  }

  TEST_CASE("draws outside the support count as zero and zero proposal density is an error") {
    FnScenario s(Box({{0, 1}, {0, 1}}), [](const EnvPoint&, Rng&) { return 1.0; },
                 [](const EnvPoint&) { return 1.0; }, [](const EnvPoint&, double) { return 1.0; });
    const FunctionProposal out([](const EnvPoint&) { return 1.0; }, [](Rng&) { return pt(2, 2); });
    Rng rng(1);
    CHECK(importance_estimate(s, FailureSpec{0}, out, 10, 1, true, rng).p_hat == 0.0);
    const FunctionProposal zero([](const EnvPoint&) { return 0.0; }, [](Rng&) { return pt(0.5, 0.5); });
    CHECK_THROWS(importance_estimate(s, FailureSpec{0}, zero, 10, 1, true, rng));
  }

  TEST_CASE("Latin hypercube strata") {
    Rng rng(7);
    const Box unit({{0, 1}, {0, 1}});
    const auto d4 = latin_hypercube(unit, 4, rng);
    for (int k = 0; k < 2; ++k) {
      std::set<int> q;
      for (const auto& x : d4) q.insert(static_cast<int>(x[k] * 4));
      CHECK(q.size() == 4);
    }
    const Box box({{0, 30}, {-2, 2}});
    const auto d = latin_hypercube(box, 144, rng);
    REQUIRE(d.size() == 144);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> v;
      for (const auto& x : d) v.push_back((x[static_cast<Eigen::Index>(k)] - box[k].lo) / box[k].width());
      std::sort(v.begin(), v.end());
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(static_cast<std::size_t>(v[i] * 144) == i);
    }
  }

  TEST_CASE("maximin choice beats the candidate median") {
    const Box box({{0, 30}, {0, 30}});
    Rng rng(13);
    Rng replay = rng;
    const auto chosen = latin_hypercube(box, 30, rng, 20);
    std::vector<double> scores;
    for (int c = 0; c < 20; ++c) scores.push_back(maximin_score(random_latin_hypercube(box, 30, replay), box));
    std::sort(scores.begin(), scores.end());
    const double median = 0.5 * (scores[9] + scores[10]);
    CHECK(maximin_score(chosen, box) >= median);
    CHECK(maximin_score(chosen, box) == scores.back());
  }

  TEST_CASE("uniform super-level proposal") {
    const EnvGrid g(Box({{0, 4}, {0, 2}}), {4, 2});
    GriddedField f{{4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}};
    const auto all = gp_uniform_proposal(f, g, 0.0);
    CHECK(all.area() == doctest::Approx(8.0));
    CHECK(all.density(pt(0.5, 0.5)) == doctest::Approx(1.0 / 8));
    CHECK_THROWS(gp_uniform_proposal(f, g, 8.0));
    const auto top = gp_uniform_proposal(f, g, 5.5);
    CHECK(top.area() == doctest::Approx(3.0));
    // integral of the density over the grid is one
    const EnvGrid fine(g.box(), {400, 200});
    double s = 0;
    for (std::size_t i = 0; i < fine.size(); ++i) s += top.density(fine.center(i));
    CHECK(s * fine.cell_area() == doctest::Approx(1.0).epsilon(1e-12));
    Rng rng(2);
    for (const auto& x : top.sample(2000, rng)) {
      const auto idx = g.index_of(x);
      REQUIRE(idx);
      CHECK(f.values[*idx] > 5.5);
    }
  }
}
