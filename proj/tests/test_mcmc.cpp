#include "failprob/mcmc.hpp"
#include "failprob/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <array>
#include <limits>
#include <sstream>

using namespace failprob;
using testing::pt;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Piecewise-constant density on [0,3]x[0,1] with one state per unit strip.
constexpr std::array<double, 3> kToyWeights{0.2, 0.3, 0.5};

int toy_state(const EnvPoint& x) { return std::min(2, static_cast<int>(x[0])); }

double toy_log_target(const EnvPoint& x) { return std::log(kToyWeights[static_cast<std::size_t>(toy_state(x))]); }

double mixture_log_target(const EnvPoint& x) {
  auto bump = [&](double c) { return std::exp(-((x[0] - c) * (x[0] - c) + (x[1] - c) * (x[1] - c)) / (2 * 1.5 * 1.5)); };
  const double v = 0.5 * bump(5) + 0.5 * bump(20);
  return v > 0 ? std::log(v) : kNegInf;
}

}  // namespace

TEST_SUITE("mcmc") {
  TEST_CASE("Metropolis acceptance") {
    CHECK(mh_accept_prob(-3.0, -3.0, 1.0) == 1.0);
    CHECK(mh_accept_prob(0.0, -2.0 * std::log(2.0), 2.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mh_accept_prob(0.0, -std::log(2.0), 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mh_accept_prob(0.0, kNegInf, 1.0) == 0.0);
    CHECK(mh_accept_prob(kNegInf, kNegInf, 1.0) == 0.0);
    CHECK(mh_accept_prob(-1.0, 5.0, 3.0) == 1.0);
  }

  TEST_CASE("swap acceptance") {
    CHECK(swap_accept_prob(-10.0, 3.0, 2.5, 2.5) == 1.0);
    CHECK(swap_accept_prob(-1.0, -1.0, 1.0, 7.0) == 1.0);
    CHECK(swap_accept_prob(0.0, 1.0, 1.0, 2.0) == 1.0);
    CHECK(swap_accept_prob(1.0, 0.0, 1.0, 2.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    Rng rng(2);
    std::uniform_real_distribution<double> u(-20, 5);
    std::uniform_real_distribution<double> t(1, 20);
    for (int i = 0; i < 1000; ++i) {
      const double a = u(rng), b = u(rng), ti = t(rng), tj = t(rng);
      CHECK(swap_accept_prob(a, b, ti, tj) == swap_accept_prob(b, a, tj, ti));
      CHECK(swap_accept_prob(a, b, ti, ti) == 1.0);
    }
  }

  TEST_CASE("reflection stays in the box") {
    CHECK(reflect_into(1.2, 0, 1) == doctest::Approx(0.8));
    CHECK(reflect_into(-0.3, 0, 1) == doctest::Approx(0.3));
    CHECK(reflect_into(2.25, 0, 1) == doctest::Approx(0.25));
    CHECK(reflect_into(0.5, 0, 1) == 0.5);
  }

  TEST_CASE("geometric initial ladder") {
    const PtConfig c;
    const auto t = c.initial_ladder();
    REQUIRE(t.size() == 5);
    CHECK(t.front() == 1.0);
    CHECK(t.back() == 20.0);
    for (std::size_t i = 1; i + 1 < t.size(); ++i) CHECK(t[i] * t[i] == doctest::Approx(t[i - 1] * t[i + 1]));
    PtConfig bad;
    bad.t_min = 2.0;
    CHECK_THROWS(bad.validate());
    bad = PtConfig{};
    bad.n_chains = 1;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("three-state occupancy and flux balance") {
    PtConfig c;
    c.n_steps = 1000000;
    c.adapt = false;
    Rng rng(77);
    const PtSample s = pt_sample(toy_log_target, Box({{0, 3}, {0, 1}}), c, rng);
    std::array<double, 3> occ{};
    std::array<std::array<double, 3>, 3> flux{};
    int prev = toy_state(s.cold.row(0).transpose());
    for (Eigen::Index i = 0; i < s.cold.rows(); ++i) {
      const int k = toy_state(s.cold.row(i).transpose());
      occ[static_cast<std::size_t>(k)] += 1;
      if (i > 0) flux[static_cast<std::size_t>(prev)][static_cast<std::size_t>(k)] += 1;
      prev = k;
    }
    const double n = static_cast<double>(s.cold.rows());
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(occ[k] / n - kToyWeights[k]) < 0.01);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) {
        const double a = flux[i][j], b = flux[j][i];
        CHECK(std::abs(a - b) < 3 * std::sqrt(a + b));
      }
    CHECK(s.target_evals == c.n_chains * c.n_steps);
  }

  TEST_CASE("standard normal target moments") {
    PtConfig c;
    c.n_steps = 5000;
    Rng rng(5);
    auto target = [](const EnvPoint& x) { return -0.5 * x.squaredNorm(); };
    const PtSample s = pt_sample(target, Box({{-10, 10}, {-10, 10}}), c, rng);
    const Eigen::MatrixXd kept = s.cold.bottomRows(s.cold.rows() - static_cast<Eigen::Index>(s.burn_in));
    const Eigen::RowVector2d mean = kept.colwise().mean();
    const Eigen::MatrixXd centered = kept.rowwise() - mean;
    const Eigen::Matrix2d cov = centered.transpose() * centered / static_cast<double>(kept.rows() - 1);
    CHECK(std::abs(mean[0]) < 0.05);
    CHECK(std::abs(mean[1]) < 0.05);
    CHECK(std::abs(cov(0, 0) - 1) < 0.1);
    CHECK(std::abs(cov(1, 1) - 1) < 0.1);
    CHECK(std::abs(cov(0, 1)) < 0.1);
  }

  TEST_CASE("ladder stays ordered while adapting") {
    PtConfig c;
    c.n_steps = 2000;
    Rng rng(8);
    const PtSample s = pt_sample(mixture_log_target, Box({{0, 30}, {0, 30}}), c, rng, true);
    std::vector<double> temps(c.n_chains);
    std::size_t step = 0;
    bool ordered = true, cold_fixed = true;
    for (const auto& r : s.records) {
      if (r.step != step) {
        for (std::size_t j = 1; j < temps.size(); ++j) ordered = ordered && temps[j - 1] <= temps[j];
        cold_fixed = cold_fixed && temps[0] == 1.0;
        step = r.step;
      }
      temps[r.chain] = r.temp;
    }
    CHECK(ordered);
    CHECK(cold_fixed);
    for (double a : s.accept_rate) CHECK((a >= 0 && a <= 1));
    for (double a : s.swap_rate) CHECK((a >= 0 && a <= 1));
    CHECK(s.records.size() == c.n_chains * c.n_steps);
  }

  TEST_CASE("mode hopping on a two-bump mixture") {
    const PtConfig c;  // 5 chains, 400 steps
    int both = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      Rng rng = make_stream(31, rep);
      const PtSample s = pt_sample(mixture_log_target, Box({{0, 30}, {0, 30}}), c, rng);
      double near1 = 0, near2 = 0, kept = 0;
      for (auto i = static_cast<Eigen::Index>(s.burn_in); i < s.cold.rows(); ++i) {
        const EnvPoint x = s.cold.row(i).transpose();
        near1 += (x - pt(5, 5)).norm() < 3;
        near2 += (x - pt(20, 20)).norm() < 3;
        kept += 1;
      }
      if (kept > 0 && near1 / kept >= 0.05 && near2 / kept >= 0.05) ++both;
    }
    CHECK(both >= 16);
  }

  TEST_CASE("burn-in found on the synthetic CDE") {
    SyntheticScenario scen(SyntheticParams{});
    auto target = [&](const EnvPoint& x) {
      const double v = *scen.exact_cond_fail_prob(x, 175) * scen.env_density(x);
      return v > 0 ? std::log(v) : kNegInf;
    };
    const PtConfig c;
    int ok = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      Rng rng = make_stream(4, rep);
      const PtSample s = pt_sample(target, scen.support(), c, rng);
      ok += !s.burn_in_fallback && s.burn_in < c.n_steps;
    }
    CHECK(ok >= 18);
  }

  TEST_CASE("zero density everywhere is an error") {
    Rng rng(1);
    CHECK_THROWS(pt_sample([](const EnvPoint&) { return kNegInf; }, Box({{0, 1}, {0, 1}}), PtConfig{}, rng));
  }

  TEST_CASE("Geweke burn-in") {
    Rng rng(3);
    std::normal_distribution<double> z;
    Eigen::MatrixXd iid(1000, 2);
    for (auto& v : iid.reshaped()) v = z(rng);
    CHECK(geweke_burnin(iid).index == 0);

    Eigen::MatrixXd drift(1000, 2);
    for (Eigen::Index i = 0; i < 1000; ++i)
      for (int k = 0; k < 2; ++k) drift(i, k) = (i < 500 ? 20.0 * (1.0 - i / 500.0) : 0.0) + 0.5 * z(rng);
    const GewekeResult g = geweke_burnin(drift);
    CHECK(g.index >= 400);

    Eigen::MatrixXd trend(1000, 1);
    for (Eigen::Index i = 0; i < 1000; ++i) trend(i, 0) = static_cast<double>(i);
    const GewekeResult t = geweke_burnin(trend);
    CHECK_FALSE(t.qualified);
    CHECK(t.index == 1000);
    CHECK_THROWS(geweke_burnin(Eigen::MatrixXd::Zero(10, 2)));
  }

  TEST_CASE("spectral density at zero for white noise") {
    Rng rng(9);
    std::normal_distribution<double> z(0, 2);
    Eigen::VectorXd v(20000);
    for (auto& x : v) x = z(rng);
    CHECK(spectral_density_zero(v) == doctest::Approx(4.0).epsilon(0.1));
  }

  TEST_CASE("chain CSV") {
    std::vector<ChainRecord> rs{{3, 1, 2.5, pt(0.5, 1.5), -2.0, true}};
    std::ostringstream os;
    write_chain_csv(os, rs);
    CHECK(os.str() == "step,chain,temp,x1,x2,logpost,accepted\n3,1,2.5,0.5,1.5,-2,1\n");
  }
}
