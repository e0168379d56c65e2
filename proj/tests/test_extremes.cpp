#include "failprob/extremes.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace failprob;

namespace {

std::vector<double> gpd_draws(double sigma, double xi, std::size_t n, Rng& rng) {
  std::vector<double> y(n);
  for (auto& v : y) v = gpd_sample(sigma, xi, rng);
  return y;
}

// data above a floor with a GPD tail; threshold at the 0.7 level sits inside the GPD part
MarginalModel tail_model(double xi, std::size_t n, Rng& rng) {
  std::vector<double> d = gpd_draws(1.5, xi, n, rng);
  for (auto& v : d) v += 3.0;
  return MarginalModel(d, 0.7);
}

std::vector<std::array<double, 2>> condext_draws(double a, double b, double mu, double sd, double v, std::size_t n,
                                                 Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::normal_distribution<double> z(mu, sd);
  std::vector<std::array<double, 2>> out;
  while (out.size() < n) {
    const double x = v + e(rng);
    out.push_back({x, a * x + std::pow(x, b) * z(rng)});
  }
  return out;
}

double laplace_draw(Rng& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  double p = 0;
  while (p == 0) p = u(rng);
  return laplace_from_uniform(p);
}

}  // namespace

TEST_SUITE("extremes") {
  TEST_CASE("timestamps") {
    CHECK(parse_timestamp_hours("2000-01-01 06:00") - parse_timestamp_hours("2000-01-01 00:00") == 6.0);
    CHECK(parse_timestamp_hours("2000-01-02T00:30") - parse_timestamp_hours("2000-01-01 00:00") == 24.5);
    CHECK(parse_timestamp_hours("1970-01-02") == 24.0);
    CHECK(parse_timestamp_hours("12.5") == 12.5);
    CHECK_THROWS(parse_timestamp_hours("yesterday"));
    CHECK_THROWS(parse_timestamp_hours("2000-02-30 00:00"));
  }

  TEST_CASE("fixture storm peaks") {
    const auto rows = read_hindcast_csv(std::string(FAILPROB_TEST_DATA) + "/hindcast_fixture.csv");
    REQUIRE(rows.size() == 58);
    const StormPeakSet s = isolate_storm_peaks(rows, 4.0);
    REQUIRE(s.peaks.size() == 4);
    const std::array<std::size_t, 4> at{8, 26, 39, 57};
    const std::array<double, 4> hs{5.2, 4.4, 6.1, 4.9};
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(s.peaks[i].row == at[i]);
      CHECK(s.peaks[i].hs == hs[i]);
      CHECK(s.peaks[i].se == doctest::Approx(steepness(rows[at[i]].hs, rows[at[i]].te)).epsilon(1e-15));
    }
    for (std::size_t i = 1; i < 4; ++i) CHECK(s.peaks[i].hours - s.peaks[i - 1].hours > 48.0);
    for (const auto& p : s.peaks) CHECK(p.hs > 4.0);
    CHECK(s.years == doctest::Approx(342.0 / 8766.0).epsilon(1e-12));
    CHECK(s.storms_per_year() == doctest::Approx(4 / s.years));
    CHECK(steepness(4.0, 10.0) == doctest::Approx(2 * 3.141592653589793 * 4 / (9.81 * 100)).epsilon(1e-15));
  }

  TEST_CASE("hand series") {
    const std::vector<double> hs{3, 5, 6, 4.5, 3, 5, 3};
    const std::vector<double> hours{0, 1, 2, 3, 4, 5, 6};
    const std::vector<double> se(7, 0.02);
    const StormPeakSet merged = isolate_storm_peaks(hours, hs, se, 4.0);
    REQUIRE(merged.peaks.size() == 1);
    CHECK(merged.peaks[0].row == 2);
    CHECK(merged.peaks[0].hs == 6.0);
    const StormPeakSet apart = isolate_storm_peaks(hours, hs, se, 4.0, 2.0);
    REQUIRE(apart.peaks.size() == 2);
    CHECK(apart.peaks[0].row == 2);
    CHECK(apart.peaks[1].row == 5);
    CHECK(isolate_storm_peaks(hours, hs, se, 6.5).peaks.empty());
    CHECK_THROWS(isolate_storm_peaks(std::vector<double>{}, std::vector<double>{}, std::vector<double>{}, 4.0));
    CHECK_THROWS(isolate_storm_peaks(std::vector<double>{1, 0}, std::vector<double>{5, 5}, std::vector<double>{0, 0}, 4.0));
  }

  TEST_CASE("hindcast CSV errors") {
    std::istringstream missing("timestamp,hs,tp,te\n2000-01-01 00:00,1,2,3\n");
    CHECK_THROWS(read_hindcast_csv(missing));
    std::istringstream shortrow("timestamp,hs,tp,te,tm\n2000-01-01 00:00,1,2\n");
    CHECK_THROWS(read_hindcast_csv(shortrow));
  }

  TEST_CASE("GPD simulation recovery") {
    Rng rng(21);
    const auto y = gpd_draws(2.0, 0.1, 2000, rng);
    const GpdFit f = gpd_fit(y);
    CHECK(std::abs(f.sigma - 2.0) < 3 * f.se_sigma);
    CHECK(std::abs(f.xi - 0.1) < 3 * f.se_xi);
    CHECK(f.nll <= gpd_nll(y, 2.0, 0.1));

    const GpdFit e = gpd_fit(gpd_draws(1.0, 0.0, 2000, rng));
    CHECK(std::abs(e.xi) < 3 * e.se_xi);
    CHECK_THROWS(gpd_fit(std::vector<double>(29, 1.0)));
  }

  TEST_CASE("GPD fit is scale equivariant") {
    Rng rng(22);
    auto y = gpd_draws(1.3, -0.1, 800, rng);
    const GpdFit a = gpd_fit(y);
    for (auto& v : y) v *= 7.5;
    const GpdFit b = gpd_fit(y);
    CHECK(b.sigma / 7.5 == doctest::Approx(a.sigma).epsilon(1e-6));
    CHECK(std::abs(b.xi - a.xi) < 1e-6);
  }

  TEST_CASE("GPD distribution functions") {
    CHECK(gpd_cdf(0.0, 2.0, 0.3) == 0.0);
    CHECK(gpd_survival(2.0, 2.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(gpd_survival(4.0, 2.0, 0.5) == doctest::Approx(0.25).epsilon(1e-14));
    for (double xi : {-0.3, 0.0, 0.4})
      for (double p : {0.01, 0.5, 0.99})
        CHECK(gpd_cdf(gpd_quantile(p, 1.7, xi), 1.7, xi) == doctest::Approx(p).epsilon(1e-12));
    CHECK(gpd_quantile(1.0, 2.0, -0.25) == doctest::Approx(8.0));
    CHECK(gpd_cdf(8.0, 2.0, -0.25) == 1.0);
  }

  TEST_CASE("marginal splice and inverse") {
    Rng rng(23);
    const MarginalModel m = tail_model(0.1, 1000, rng);
    const double u = m.threshold();
    CHECK(m.cdf(u) == m.cdf_at_threshold());
    CHECK(m.cdf(u + 1e-10) == doctest::Approx(m.cdf_at_threshold()).epsilon(1e-8));
    for (double x = u + 0.01; x < u + 15; x += 0.37) CHECK(std::abs(m.quantile(m.cdf(x)) - x) < 1e-8);
    for (double x = u + 0.01; x < u + 15; x += 0.37) CHECK(m.cdf(x) + m.survival(x) == doctest::Approx(1.0));
    CHECK_THROWS(m.quantile(0.0));
    CHECK_THROWS(m.quantile(1.0));
  }

  TEST_CASE("negative shape has a finite endpoint") {
    Rng rng(24);
    const MarginalModel m = tail_model(-0.3, 1000, rng);
    REQUIRE(m.gpd().xi < 0);
    const double end = m.threshold() - m.gpd().sigma / m.gpd().xi;
    CHECK(m.upper_endpoint() == doctest::Approx(end).epsilon(1e-14));
    CHECK(m.cdf(end) == 1.0);
    CHECK(m.cdf(end + 1) == 1.0);
    CHECK(m.quantile(1 - 1e-15) <= end + 1e-9);
    CHECK(m.quantile(1 - 1e-15) == doctest::Approx(end).epsilon(1e-3));
  }

  TEST_CASE("Laplace transform") {
    CHECK(laplace_from_uniform(0.5) == 0.0);
    CHECK(laplace_from_uniform(1 - std::exp(-2.0) / 2) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(uniform_from_laplace(-1.5) == doctest::Approx(std::exp(-1.5) / 2));
    Rng rng(25);
    const MarginalModel m = tail_model(0.05, 1000, rng);
    CHECK(std::abs(m.to_laplace(m.quantile(0.5))) < 1e-9);
    CHECK(m.to_laplace(m.quantile(1 - std::exp(-2.0) / 2)) == doctest::Approx(2.0).epsilon(1e-9));
    const double lo = m.quantile(0.01), hi = m.quantile(1 - 1e-6);
    for (int i = 0; i <= 200; ++i) {
      const double x = lo + (hi - lo) * i / 200.0;
      CHECK(std::abs(m.from_laplace(m.to_laplace(x)) - x) < 1e-8);
    }
    bool guarded = false;
    CHECK(m.to_laplace(-100.0, &guarded) == -kLaplaceGuard);
    CHECK(guarded);
    m.to_laplace(m.quantile(0.3), &guarded);
    CHECK_FALSE(guarded);
  }

  TEST_CASE("transformed data look Laplace") {
    Rng rng(26);
    std::vector<double> d = gpd_draws(1.5, 0.1, 4000, rng);
    for (auto& v : d) v += 3.0;
    const MarginalModel m(d, 0.7);
    std::vector<double> z;
    for (double v : d) z.push_back(m.to_laplace(v));
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    const double median = 0.5 * (z[1999] + z[2000]);
    CHECK(std::abs(median) < 3 / std::sqrt(n));
    for (double level : {1.0, 2.0, 3.0}) {
      const double p = std::exp(-level) / 2;
      const double hits = static_cast<double>(z.end() - std::upper_bound(z.begin(), z.end(), level));
      CHECK(std::abs(hits / n - p) < 3 * testing::binomial_se(p, z.size()) + 1 / n);
    }
  }

  TEST_CASE("Keef constraints by hand") {
    const std::array<double, 2> z{-1, 1}, zpos{-3, 0.5}, zneg{0, 6};
    CHECK(keef_constraints_ok(0.5, 0.2, z, zpos, zneg, 5.0));
    CHECK_FALSE(keef_constraints_ok(0.95, 0.2, z, zpos, zneg, 5.0));
    CHECK_FALSE(keef_constraints_ok(0.5, 0.2, {std::nan(""), 1}, zpos, zneg, 5.0));
  }

  TEST_CASE("conditional extremes recovery") {
    Rng rng(27);
    const auto pairs = condext_draws(0.7, 0.3, 0.2, 0.5, 1.0, 2000, rng);
    const CondExtFit f = condext_fit(pairs, 1.0);
    CHECK(std::abs(f.alpha - 0.7) < 3 * f.se_alpha);
    CHECK(std::abs(f.beta - 0.3) < 3 * f.se_beta);
    CHECK(f.mu == doctest::Approx(0.2).epsilon(0.5));
    CHECK(f.sd == doctest::Approx(0.5).epsilon(0.15));
    CHECK(f.residuals.size() == 2000);
    CHECK(f.alpha >= -1);
    CHECK(f.alpha <= 1);
    CHECK(f.beta <= 1);
  }

  TEST_CASE("conditional extremes limits") {
    Rng rng(28);
    std::vector<std::array<double, 2>> same, indep;
    std::exponential_distribution<double> e(1.0);
    for (int i = 0; i < 1000; ++i) {
      const double x = 1.0 + e(rng);
      same.push_back({x, x});
      indep.push_back({x, laplace_draw(rng)});
    }
    const CondExtFit d = condext_fit(same, 1.0);
    CHECK(d.alpha > 0.99);
    CHECK(d.sd < 1e-3);
    const CondExtFit i = condext_fit(indep, 1.0);
    CHECK(std::abs(i.alpha) < 0.15);
    CHECK(i.beta < 0.5);
    CHECK_THROWS(condext_fit(std::vector<std::array<double, 2>>(10, {2.0, 1.0}), 1.0));
  }

  TEST_CASE("degenerate residuals reproduce the conditioning draw") {
    CondExtFit f;
    f.v = 2.0;
    f.alpha = 1.0;
    f.beta = 0.0;
    f.delta_ht = 0.0;
    f.residuals = std::vector<double>(10, 0.0);
    Rng rng(29);
    for (const auto& p : condext_simulate_laplace(f, 1000, rng)) {
      CHECK(p[1] == p[0]);
      CHECK(p[0] > 2.0);
    }
  }

  TEST_CASE("simulation respects the rejection region and the conditioning margin") {
    Rng rng(30);
    const auto pairs = condext_draws(0.3, 0.1, 0.0, 0.3, 3.0, 500, rng);
    const CondExtFit f = condext_fit(pairs, 3.0);
    const auto lap = condext_simulate_laplace(f, 20000, rng);
    for (const auto& p : lap) CHECK(p[1] <= p[0]);

    const MarginalModel m1 = tail_model(0.1, 1000, rng), m2 = tail_model(-0.1, 1000, rng);
    const std::size_t n = 100000;
    const auto phys = condext_simulate(f, m1, m2, n, rng);
    const double fv = uniform_from_laplace(3.0);
    for (double q : {0.99, 0.995, 0.999}) {
      const double level = m1.quantile(q);
      double hits = 0;
      for (const auto& p : phys) hits += p[0] > level;
      const double expect = (1 - q) / (1 - fv);
      CHECK(std::abs(hits / n - expect) < 3 * testing::binomial_se(expect, n));
    }
  }

  TEST_CASE("gridded density from synthetic peaks") {
    Rng rng(31);
    const StormPeakSet peaks = synthetic_storm_peaks(SyntheticPeakParams{}, rng);
    REQUIRE(peaks.peaks.size() == 976);
    EnvModelConfig cfg;
    const EnvironmentModel m = build_environment_model(peaks, cfg, rng);
    const GriddedDensity& d = m.density;
    CHECK(d.total_mass() >= 0.9);
    CHECK(d.total_mass() <= 1.1);
    for (double v : d.values) CHECK(v >= 0);
    CHECK(d.at(testing::pt(2.0, 0.03)) == 0.0);
    CHECK(d.at(testing::pt(6.0, 0.06)) == 0.0);
    CHECK(d.lower_mass + d.upper_mass == doctest::Approx(1.0));

    // H_s marginal density either side of the splice
    const EnvGrid& g = d.grid;
    const std::size_t nh = g.counts()[0], ns = g.counts()[1];
    std::vector<double> col(nh, 0.0);
    for (std::size_t i = 0; i < nh; ++i)
      for (std::size_t j = 0; j < ns; ++j) col[i] += d.values[i * ns + j] * g.step(1);
    std::size_t first_upper = 0;
    while (first_upper < nh && d.regions[first_upper * ns] == CellRegion::lower) ++first_upper;
    REQUIRE(first_upper > 0);
    REQUIRE(first_upper < nh);
    const double a = col[first_upper - 1], b = col[first_upper];
    CHECK(std::abs(b - a) / std::max(a, b) < 0.25);

    const auto side = environment_sidecar(m);
    CHECK(side.at("conditional").at("delta_ht") == 0.4);
    CHECK(side.contains("hs_splice"));
  }
}
