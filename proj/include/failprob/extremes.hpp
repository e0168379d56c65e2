#pragma once

#include "failprob/core.hpp"

#include <json.hpp>

#include <array>
#include <iosfwd>

namespace failprob {

inline constexpr double kGravity = 9.81;

struct HindcastRow final {
  std::string timestamp;
  double hours = 0.0;
  double hs = 0.0;
  double tp = 0.0;
  double te = 0.0;
  double tm = 0.0;
};

// "YYYY-MM-DD HH[:MM[:SS]]" (or 'T' separator) as hours since 1970-01-01, or a bare number of hours.
double parse_timestamp_hours(const std::string& ts);
std::vector<HindcastRow> read_hindcast_csv(std::istream& is);
std::vector<HindcastRow> read_hindcast_csv(const std::string& path);
double steepness(double hs, double te);

struct StormPeak final {
  std::size_t row = 0;
  double hours = 0.0;
  double hs = 0.0;
  double se = 0.0;
};

struct StormPeakSet final {
  std::vector<StormPeak> peaks;
  double h_st = 0.0;
  double merge_hours = 48.0;
  double years = 0.0;  // record length, for the storm rate

  double storms_per_year() const;
};

StormPeakSet isolate_storm_peaks(const std::vector<HindcastRow>& series, double h_st, double merge_hours = 48.0);
StormPeakSet isolate_storm_peaks(const std::vector<double>& hours, const std::vector<double>& hs,
                                 const std::vector<double>& se, double h_st, double merge_hours = 48.0);

struct GpdFit final {
  double sigma = 1.0;
  double xi = 0.0;
  double se_sigma = 0.0;
  double se_xi = 0.0;
  double nll = 0.0;
  std::size_t n = 0;
  bool converged = false;
};

double gpd_nll(const std::vector<double>& excesses, double sigma, double xi);
double gpd_cdf(double y, double sigma, double xi);
double gpd_survival(double y, double sigma, double xi);
double gpd_quantile(double p, double sigma, double xi);
// Quantile from the exceedance probability s = 1 - p.
double gpd_quantile_survival(double s, double sigma, double xi);
double gpd_sample(double sigma, double xi, Rng& rng);
GpdFit gpd_fit(const std::vector<double>& excesses);

// Empirical distribution below the threshold spliced with a GPD above it.
class MarginalModel final {
 public:
  MarginalModel(std::vector<double> data, double quantile_level);

  double cdf(double x) const;
  double survival(double x) const;
  double quantile(double p) const;
  double quantile_survival(double s) const;
  double to_laplace(double x, bool* guarded = nullptr) const;
  double from_laplace(double z) const;

  double threshold() const { return u_; }
  double threshold_level() const { return level_; }
  double cdf_at_threshold() const { return f_u_; }
  const GpdFit& gpd() const { return gpd_; }
  double upper_endpoint() const;

 private:
  double empirical_cdf(double x) const;
  double empirical_quantile(double p) const;

  std::vector<double> values_;  // distinct sorted values
  std::vector<double> probs_;   // empirical CDF at each distinct value
  double level_ = 0.7;
  double u_ = 0.0;
  double f_u_ = 0.0;
  GpdFit gpd_;
};

inline constexpr double kLaplaceGuard = 38.0;
double laplace_from_uniform(double p);
double uniform_from_laplace(double z);

struct CondExtFit final {
  double v = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double mu = 0.0;
  double sd = 1.0;
  double se_alpha = 0.0;
  double se_beta = 0.0;
  std::vector<double> residuals;
  double delta_ht = 0.4;
  double constraint_v = 0.0;
  std::size_t n_exceed = 0;
  double nll = 0.0;
  bool converged = false;
};

// Keef et al. constraint check at conditioning level v, in the texmex form.
bool keef_constraints_ok(double alpha, double beta, const std::array<double, 2>& z_range,
                         const std::array<double, 2>& zpos_range, const std::array<double, 2>& zneg_range, double v);

// pairs: (conditioning, other) on the Laplace scale.
CondExtFit condext_fit(const std::vector<std::array<double, 2>>& laplace_pairs, double v, double delta_ht = 0.4);

// Physical-scale points (conditioning, other) drawn in the region where the conditioning variable exceeds v.
std::vector<std::array<double, 2>> condext_simulate_laplace(const CondExtFit& fit, std::size_t n_sm, Rng& rng);
std::vector<std::array<double, 2>> condext_simulate(const CondExtFit& fit, const MarginalModel& cond_margin,
                                                    const MarginalModel& other_margin, std::size_t n_sm, Rng& rng);

enum class CellRegion { lower, upper, outside };

struct GriddedDensity final {
  EnvGrid grid;
  std::vector<double> values;
  std::vector<CellRegion> regions;
  double hs_splice = 0.0;
  double lower_mass = 0.0;
  double upper_mass = 0.0;
  Eigen::VectorXd lower_bandwidth;

  double total_mass() const;
  double at(const EnvPoint& x) const;
  GriddedField field() const { return {grid.counts(), values}; }
};

struct EnvModelConfig final {
  double marginal_quantile = 0.7;
  double conditioning_quantile = 0.6;
  double delta_ht = 0.4;
  std::size_t n_sm = 100000;
  EnvGrid grid{Box({{3.0, 12.0}, {0.01, 0.05}}), {90, 45}};

  void validate() const;
};

struct EnvironmentModel final {
  MarginalModel hs;
  MarginalModel se;
  CondExtFit fit;
  GriddedDensity density;
  double storms_per_year = 0.0;
};

GriddedDensity gridded_density(const StormPeakSet& peaks, const CondExtFit& fit, const MarginalModel& hs_margin,
                               const MarginalModel& se_margin, const EnvGrid& grid, std::size_t n_sm, Rng& rng);
EnvironmentModel build_environment_model(const StormPeakSet& peaks, const EnvModelConfig& config, Rng& rng);
nlohmann::json environment_sidecar(const EnvironmentModel& model);

// Synthetic storm peaks: GPD H_s above a floor, scaled-Beta steepness, Gaussian-copula dependence.
struct SyntheticPeakParams final {
  std::size_t n_peaks = 976;
  double years = 37.5;
  double hs_floor = 4.0;
  double hs_sigma = 1.2;
  double hs_xi = -0.15;
  double se_lo = 0.012;
  double se_hi = 0.048;
  double se_shape_a = 4.0;
  double se_shape_b = 4.0;
  double rho = 0.6;
};

StormPeakSet synthetic_storm_peaks(const SyntheticPeakParams& params, Rng& rng);

}  // namespace failprob
