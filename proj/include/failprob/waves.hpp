#pragma once

#include "failprob/core.hpp"
#include "failprob/extremes.hpp"

#include <complex>
#include <iosfwd>
#include <limits>
#include <memory>

namespace failprob {

struct SeaState final {
  double hs = 1.0;
  double se = 0.03;

  double t2() const;  // second-moment period from steepness
  void validate() const;
};

struct SpectrumConfig final {
  double f_lo = 1e-3;
  double f_hi = 1.0;
  std::size_t n_freq = 3600;
  double peak_enhancement = 3.3;
  double tail_exponent = 5.0;

  double delta_f() const { return (f_hi - f_lo) / static_cast<double>(n_freq - 1); }
  double freq(std::size_t i) const { return f_lo + static_cast<double>(i) * delta_f(); }
  void validate() const;
};

// Discretized spectrum with the scale calibrated so that 4 sqrt(sum S df) = hs.
struct WaveSpectrum final {
  std::vector<double> freq;
  std::vector<double> density;
  double alpha = 0.0;
  double delta_f = 0.0;

  double m0() const;
};

// Peak-width exponent at angular frequency omega for peak omega_p.
double jonswap_peak_width(double omega, double omega_p);
// Uncalibrated shape, i.e. the density with alpha = 1.
double jonswap_shape(double f, const SeaState& state, const SpectrumConfig& config);
WaveSpectrum jonswap_spectrum(const SeaState& state, const SpectrumConfig& config);
double jonswap_density(double f, const SeaState& state, const SpectrumConfig& config);

enum class TransferVariant { verbatim, squared };

struct TransferParams final {
  double f0 = 0.1;
  double damping = std::numeric_limits<double>::quiet_NaN();  // must be configured
  TransferVariant variant = TransferVariant::verbatim;

  void validate() const;
};

std::complex<double> transfer_gain(double f, const TransferParams& transfer);

struct SurfaceConfig final {
  double dt = 0.5;
  double duration = 3600.0;
  double depth = 30.0;  // recorded only

  std::size_t n_samples() const;
  void validate() const;
};

// Evaluates sum_i Re[c_i exp(2 pi i f_i t_k)] on the time grid through a chirp-z transform.
class SurfaceSynthesizer final {
 public:
  SurfaceSynthesizer(const SpectrumConfig& spectrum, const SurfaceConfig& surface);
  ~SurfaceSynthesizer();
  SurfaceSynthesizer(SurfaceSynthesizer&&) noexcept;
  SurfaceSynthesizer& operator=(SurfaceSynthesizer&&) noexcept;
  SurfaceSynthesizer(const SurfaceSynthesizer&) = delete;
  SurfaceSynthesizer& operator=(const SurfaceSynthesizer&) = delete;

  // coeffs[i] = A_i - i B_i.
  std::vector<double> synthesize(const std::vector<std::complex<double>>& coeffs) const;
  std::vector<double> sample(const WaveSpectrum& spectrum, Rng& rng) const;
  std::size_t n_samples() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Plain O(n_freq * n_samples) evaluation of the same sum.
std::vector<double> surface_direct_sum(const std::vector<std::complex<double>>& coeffs, const SpectrumConfig& spectrum,
                                       const SurfaceConfig& surface);

std::vector<double> linear_surface(const SeaState& state, const SpectrumConfig& spectrum, const SurfaceConfig& surface,
                                   Rng& rng);

class HarmonicFilter final {
 public:
  HarmonicFilter(std::size_t n, double dt, TransferParams transfer);
  ~HarmonicFilter();
  HarmonicFilter(HarmonicFilter&&) noexcept;
  HarmonicFilter& operator=(HarmonicFilter&&) noexcept;
  HarmonicFilter(const HarmonicFilter&) = delete;
  HarmonicFilter& operator=(const HarmonicFilter&) = delete;

  std::vector<double> apply(const std::vector<double>& series) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<double> harmonic_response(const std::vector<double>& series, const TransferParams& transfer, double dt);

double max_response(const std::vector<double>& series);

struct WaveConfig final {
  SpectrumConfig spectrum;
  TransferParams transfer;
  SurfaceConfig surface;
};

struct ResponseGrid final {
  EnvGrid grid;
  std::size_t n_rl = 0;
  std::vector<std::vector<double>> maxima;  // per cell, sorted ascending

  double cdf(std::size_t cell, double r) const;
  double exceedance(std::size_t cell, double r) const;
  double min_response() const;
  double max_response() const;
};

// Per-cell response maxima at the cell centers. Each cell uses its own stream derived from master_seed.
ResponseGrid response_grid(const EnvGrid& grid, const WaveConfig& config, std::size_t n_rl, std::uint64_t master_seed,
                           std::size_t workers = 1, EvalCounter* counter = nullptr);

void write_response_grid_csv(std::ostream& os, const ResponseGrid& rg);
ResponseGrid read_response_grid_csv(std::istream& is, const EnvGrid& grid);

// Pooled response distribution, normalized by the density mass on the grid.
double pooled_response_cdf(const ResponseGrid& rg, const GriddedDensity& density, double r);
double single_storm_failure_prob(const ResponseGrid& rg, const GriddedDensity& density, double r);
double construction_failure_prob(double storms_per_year, double return_period = 50.0);
double critical_response_50yr(const ResponseGrid& rg, const GriddedDensity& density, double storms_per_year,
                              double return_period = 50.0);

}  // namespace failprob
