#include "failprob/waves.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

namespace failprob {

namespace {

using cplx = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Planner calls are not thread-safe in FFTW; execution on fresh arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

FftwBuffer make_buffer(std::size_t n) {
  auto* p = fftw_alloc_complex(n);
  if (!p) throw std::bad_alloc();
  return FftwBuffer(p);
}

class FftPlan final {
 public:
  FftPlan(std::size_t n, int sign) {
    FftwBuffer scratch = make_buffer(n);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), scratch.get(), scratch.get(), sign, FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("FFTW planning failed");
  }
  ~FftPlan() {
    if (plan_) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void execute(fftw_complex* data) const { fftw_execute_dft(plan_, data, data); }

 private:
  fftw_plan plan_ = nullptr;
};

cplx as_cplx(const fftw_complex& c) { return {c[0], c[1]}; }
void store(fftw_complex& c, cplx v) {
  c[0] = v.real();
  c[1] = v.imag();
}

// exp(2 pi i * frac(x)) with the reduction done in extended precision.
cplx unit_phase(long double x) {
  const long double frac = x - std::floor(x);
  const double ang = kTwoPi * static_cast<double>(frac);
  return {std::cos(ang), std::sin(ang)};
}

}  // namespace

double SeaState::t2() const { return std::sqrt(kTwoPi * hs / (kGravity * se)); }

void SeaState::validate() const {
  if (!(hs > 0.0) || !std::isfinite(hs)) throw std::invalid_argument("sea state needs hs > 0");
  if (!(se > 0.0) || !std::isfinite(se)) throw std::invalid_argument("sea state needs se > 0");
}

void SpectrumConfig::validate() const {
  if (n_freq < 2) throw std::invalid_argument("spectrum needs at least two frequencies");
  if (!(f_lo > 0.0 && f_hi > f_lo)) throw std::invalid_argument("spectrum frequency range must satisfy 0 < f_lo < f_hi");
  if (!(peak_enhancement > 0.0)) throw std::invalid_argument("peak enhancement must be positive");
  if (!(tail_exponent > 0.0)) throw std::invalid_argument("tail exponent must be positive");
}

double WaveSpectrum::m0() const {
  double s = 0.0;
  for (double v : density) s += v;
  return s * delta_f;
}

double jonswap_peak_width(double omega, double omega_p) {
  const double width = omega_p > std::abs(omega) ? 0.09 : 0.07;
  const double d = std::abs(omega) / omega_p - 1.0;
  return std::exp(-d * d / (2.0 * width * width));
}

double jonswap_shape(double f, const SeaState& state, const SpectrumConfig& config) {
  if (!(f > 0.0)) throw std::invalid_argument("spectral density needs f > 0");
  const double omega = kTwoPi * f;
  const double omega_p = kTwoPi / state.t2();
  const double r = config.tail_exponent;
  return std::pow(omega, -r) * std::exp(-0.25 * r * std::pow(omega / omega_p, -4.0)) *
         std::pow(config.peak_enhancement, jonswap_peak_width(omega, omega_p));
}

WaveSpectrum jonswap_spectrum(const SeaState& state, const SpectrumConfig& config) {
  state.validate();
  config.validate();
  WaveSpectrum s;
  s.delta_f = config.delta_f();
  s.freq.resize(config.n_freq);
  s.density.resize(config.n_freq);
  double m = 0.0;
  for (std::size_t i = 0; i < config.n_freq; ++i) {
    s.freq[i] = config.freq(i);
    s.density[i] = jonswap_shape(s.freq[i], state, config);
    m += s.density[i];
  }
  m *= s.delta_f;
  const double target = state.hs * state.hs / 16.0;
  if (!std::isfinite(m) || !(m > 0.0)) throw std::runtime_error("spectrum calibration failed: non-finite or zero moment");
  s.alpha = target / m;
  for (double& v : s.density) v *= s.alpha;
  return s;
}

double jonswap_density(double f, const SeaState& state, const SpectrumConfig& config) {
  return jonswap_spectrum(state, config).alpha * jonswap_shape(f, state, config);
}

void TransferParams::validate() const {
  if (!(f0 > 0.0)) throw std::invalid_argument("transfer f0 must be positive");
  if (!(damping > 0.0) || !std::isfinite(damping))
    throw std::invalid_argument("transfer damping must be configured as a positive number");
}

std::complex<double> transfer_gain(double f, const TransferParams& t) {
  const double stiff = t.variant == TransferVariant::verbatim ? t.f0 : t.f0 * t.f0;
  return 1.0 / cplx(stiff - f * f, t.damping * f);
}

std::size_t SurfaceConfig::n_samples() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

void SurfaceConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("surface dt must be positive");
  if (!(duration >= dt)) throw std::invalid_argument("surface duration must cover at least one step");
}

struct SurfaceSynthesizer::Impl {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t n_fft = 0;
  std::vector<cplx> pre;
  std::vector<cplx> post;
  FftwBuffer kernel;
  FftPlan forward;
  FftPlan backward;

  Impl(std::size_t n_in_, std::size_t n_out_, std::size_t n_fft_)
      : n_in(n_in_), n_out(n_out_), n_fft(n_fft_), kernel(make_buffer(n_fft_)), forward(n_fft_, FFTW_FORWARD),
        backward(n_fft_, FFTW_BACKWARD) {}
};

SurfaceSynthesizer::SurfaceSynthesizer(const SpectrumConfig& spectrum, const SurfaceConfig& surface) {
  spectrum.validate();
  surface.validate();
  const std::size_t n_in = spectrum.n_freq;
  const std::size_t n_out = surface.n_samples();
  std::size_t n_fft = 1;
  while (n_fft < n_in + n_out - 1) n_fft <<= 1;
  impl_ = std::make_unique<Impl>(n_in, n_out, n_fft);

  // f_i t_k = f_lo t_k + df dt (i^2 + k^2 - (k - i)^2) / 2
  const long double half_rate = static_cast<long double>(spectrum.delta_f()) * surface.dt / 2.0L;
  const long double base = static_cast<long double>(spectrum.f_lo) * surface.dt;
  auto sq = [](std::size_t m) { return static_cast<long double>(m) * static_cast<long double>(m); };

  impl_->pre.resize(n_in);
  for (std::size_t i = 0; i < n_in; ++i) impl_->pre[i] = unit_phase(half_rate * sq(i));
  impl_->post.resize(n_out);
  for (std::size_t k = 0; k < n_out; ++k)
    impl_->post[k] = unit_phase(half_rate * sq(k) + base * static_cast<long double>(k));

  fftw_complex* b = impl_->kernel.get();
  for (std::size_t j = 0; j < n_fft; ++j) store(b[j], 0.0);
  for (std::size_t m = 0; m < n_out; ++m) store(b[m], std::conj(unit_phase(half_rate * sq(m))));
  for (std::size_t m = 1; m < n_in; ++m) store(b[n_fft - m], std::conj(unit_phase(half_rate * sq(m))));
  impl_->forward.execute(b);
}

SurfaceSynthesizer::~SurfaceSynthesizer() = default;
SurfaceSynthesizer::SurfaceSynthesizer(SurfaceSynthesizer&&) noexcept = default;
SurfaceSynthesizer& SurfaceSynthesizer::operator=(SurfaceSynthesizer&&) noexcept = default;

std::size_t SurfaceSynthesizer::n_samples() const { return impl_->n_out; }

std::vector<double> SurfaceSynthesizer::synthesize(const std::vector<cplx>& coeffs) const {
  const Impl& im = *impl_;
  if (coeffs.size() != im.n_in) throw std::invalid_argument("coefficient count does not match the frequency grid");
  FftwBuffer work = make_buffer(im.n_fft);
  fftw_complex* a = work.get();
  for (std::size_t i = 0; i < im.n_in; ++i) store(a[i], coeffs[i] * im.pre[i]);
  for (std::size_t i = im.n_in; i < im.n_fft; ++i) store(a[i], 0.0);
  im.forward.execute(a);
  for (std::size_t j = 0; j < im.n_fft; ++j) store(a[j], as_cplx(a[j]) * as_cplx(im.kernel[j]));
  im.backward.execute(a);
  const double scale = 1.0 / static_cast<double>(im.n_fft);
  std::vector<double> out(im.n_out);
  for (std::size_t k = 0; k < im.n_out; ++k) out[k] = (im.post[k] * as_cplx(a[k])).real() * scale;
  return out;
}

std::vector<double> SurfaceSynthesizer::sample(const WaveSpectrum& spectrum, Rng& rng) const {
  if (spectrum.density.size() != impl_->n_in) throw std::invalid_argument("spectrum does not match the synthesizer");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<cplx> c(impl_->n_in);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double sd = std::sqrt(spectrum.density[i] * spectrum.delta_f);
    const double a = sd * normal(rng);
    const double b = sd * normal(rng);
    c[i] = cplx(a, -b);
  }
  return synthesize(c);
}

std::vector<double> surface_direct_sum(const std::vector<cplx>& coeffs, const SpectrumConfig& spectrum,
                                       const SurfaceConfig& surface) {
  const std::size_t n_out = surface.n_samples();
  std::vector<double> out(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double t = static_cast<double>(k) * surface.dt;
    double s = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      const double ang = kTwoPi * spectrum.freq(i) * t;
      s += coeffs[i].real() * std::cos(ang) - coeffs[i].imag() * std::sin(ang);
    }
    out[k] = s;
  }
  return out;
}

std::vector<double> linear_surface(const SeaState& state, const SpectrumConfig& spectrum, const SurfaceConfig& surface,
                                   Rng& rng) {
  const SurfaceSynthesizer synth(spectrum, surface);
  return synth.sample(jonswap_spectrum(state, spectrum), rng);
}

struct HarmonicFilter::Impl {
  std::size_t n = 0;
  std::vector<cplx> gain;
  FftPlan forward;
  FftPlan backward;

  explicit Impl(std::size_t n_) : n(n_), forward(n_, FFTW_FORWARD), backward(n_, FFTW_BACKWARD) {}
};

HarmonicFilter::HarmonicFilter(std::size_t n, double dt, TransferParams transfer) {
  transfer.validate();
  if (n < 2) throw std::invalid_argument("harmonic filter needs at least two samples");
  if (!(dt > 0.0)) throw std::invalid_argument("harmonic filter needs dt > 0");
  impl_ = std::make_unique<Impl>(n);
  impl_->gain.resize(n);
  const double df = 1.0 / (static_cast<double>(n) * dt);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = k <= n / 2 ? static_cast<double>(k) * df : -static_cast<double>(n - k) * df;
    impl_->gain[k] = transfer_gain(f, transfer);
  }
  if (n % 2 == 0) impl_->gain[n / 2] = impl_->gain[n / 2].real();
}

HarmonicFilter::~HarmonicFilter() = default;
HarmonicFilter::HarmonicFilter(HarmonicFilter&&) noexcept = default;
HarmonicFilter& HarmonicFilter::operator=(HarmonicFilter&&) noexcept = default;

std::vector<double> HarmonicFilter::apply(const std::vector<double>& series) const {
  const Impl& im = *impl_;
  if (series.size() != im.n) throw std::invalid_argument("series length does not match the filter");
  FftwBuffer work = make_buffer(im.n);
  fftw_complex* a = work.get();
  double norm2 = 0.0;
  for (std::size_t k = 0; k < im.n; ++k) {
    store(a[k], series[k]);
    norm2 += series[k] * series[k];
  }
  im.forward.execute(a);
  for (std::size_t k = 0; k < im.n; ++k) store(a[k], as_cplx(a[k]) * im.gain[k]);
  im.backward.execute(a);
  const double scale = 1.0 / static_cast<double>(im.n);
  std::vector<double> out(im.n);
  double residue = 0.0;
  for (std::size_t k = 0; k < im.n; ++k) {
    out[k] = a[k][0] * scale;
    residue = std::max(residue, std::abs(a[k][1] * scale));
  }
  if (residue >= 1e-8 * std::sqrt(norm2) && residue > 0.0) {
    std::ostringstream os;
    os << "harmonic response has imaginary residue " << residue << " (series norm " << std::sqrt(norm2) << ")";
    throw std::runtime_error(os.str());
  }
  return out;
}

std::vector<double> harmonic_response(const std::vector<double>& series, const TransferParams& transfer, double dt) {
  return HarmonicFilter(series.size(), dt, transfer).apply(series);
}

double max_response(const std::vector<double>& series) {
  if (series.empty()) throw std::invalid_argument("max_response of an empty series");
  return *std::max_element(series.begin(), series.end());
}

double ResponseGrid::cdf(std::size_t cell, double r) const {
  const auto& m = maxima.at(cell);
  if (m.empty()) throw std::runtime_error("response grid cell has no realizations");
  return static_cast<double>(std::upper_bound(m.begin(), m.end(), r) - m.begin()) / static_cast<double>(m.size());
}

double ResponseGrid::exceedance(std::size_t cell, double r) const { return 1.0 - cdf(cell, r); }

double ResponseGrid::min_response() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& m : maxima)
    if (!m.empty()) v = std::min(v, m.front());
  return v;
}

double ResponseGrid::max_response() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& m : maxima)
    if (!m.empty()) v = std::max(v, m.back());
  return v;
}

ResponseGrid response_grid(const EnvGrid& grid, const WaveConfig& config, std::size_t n_rl, std::uint64_t master_seed,
                           std::size_t workers, EvalCounter* counter) {
  if (grid.dim() != 2) throw std::invalid_argument("response grid needs a 2-D (hs, se) grid");
  if (n_rl == 0) throw std::invalid_argument("response grid needs n_rl >= 1");
  config.transfer.validate();
  ResponseGrid out{grid, n_rl, std::vector<std::vector<double>>(grid.size())};
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    try {
      const SurfaceSynthesizer synth(config.spectrum, config.surface);
      const HarmonicFilter filter(synth.n_samples(), config.surface.dt, config.transfer);
      for (std::size_t cell = next++; cell < grid.size(); cell = next++) {
        const EnvPoint c = grid.center(cell);
        const WaveSpectrum spec = jonswap_spectrum(SeaState{c[0], c[1]}, config.spectrum);
        Rng rng = make_stream(master_seed, cell);
        auto& m = out.maxima[cell];
        m.resize(n_rl);
        for (std::size_t j = 0; j < n_rl; ++j) m[j] = max_response(filter.apply(synth.sample(spec, rng)));
        std::sort(m.begin(), m.end());
        if (counter) counter->add_draws(n_rl);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = grid.size();
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, grid.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_response_grid_csv(std::ostream& os, const ResponseGrid& rg) {
  os << "x1,x2,rank,response\n";
  char buf[128];
  for (std::size_t cell = 0; cell < rg.maxima.size(); ++cell) {
    const EnvPoint c = rg.grid.center(cell);
    for (std::size_t j = 0; j < rg.maxima[cell].size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g\n", c[0], c[1], j + 1, rg.maxima[cell][j]);
      os << buf;
    }
  }
}

ResponseGrid read_response_grid_csv(std::istream& is, const EnvGrid& grid) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x1,x2,rank,response", 0) != 0)
    throw std::runtime_error("response grid CSV must start with header x1,x2,rank,response");
  ResponseGrid out{grid, 0, std::vector<std::vector<double>>(grid.size())};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double x1 = 0, x2 = 0, resp = 0;
    std::size_t rank = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%zu,%lf", &x1, &x2, &rank, &resp) != 4)
      throw std::runtime_error("malformed response grid row: " + line);
    EnvPoint x(2);
    x << x1, x2;
    const auto idx = grid.index_of(x);
    if (!idx) throw std::runtime_error("response grid row outside the grid: " + line);
    out.maxima[*idx].push_back(resp);
  }
  for (auto& m : out.maxima) {
    std::sort(m.begin(), m.end());
    if (out.n_rl == 0) out.n_rl = m.size();
    if (m.size() != out.n_rl) throw std::runtime_error("response grid cells have unequal realization counts");
  }
  return out;
}

namespace {

void check_density_grid(const ResponseGrid& rg, const GriddedDensity& density) {
  if (density.values.size() != rg.maxima.size())
    throw std::invalid_argument("density and response grid have different cell counts");
}

}  // namespace

double pooled_response_cdf(const ResponseGrid& rg, const GriddedDensity& density, double r) {
  check_density_grid(rg, density);
  double mass = 0.0, s = 0.0;
  for (std::size_t i = 0; i < rg.maxima.size(); ++i) {
    if (density.values[i] <= 0.0) continue;
    mass += density.values[i];
    s += rg.cdf(i, r) * density.values[i];
  }
  if (!(mass > 0.0)) throw std::runtime_error("density has no mass on the response grid");
  return s / mass;
}

double single_storm_failure_prob(const ResponseGrid& rg, const GriddedDensity& density, double r) {
  check_density_grid(rg, density);
  double s = 0.0;
  for (std::size_t i = 0; i < rg.maxima.size(); ++i) {
    if (density.values[i] > 0.0) s += rg.exceedance(i, r) * density.values[i];
  }
  return s * rg.grid.cell_area();
}

double construction_failure_prob(double storms_per_year, double return_period) {
  return 1.0 - std::pow(1.0 - 1.0 / return_period, 1.0 / storms_per_year);
}

double critical_response_50yr(const ResponseGrid& rg, const GriddedDensity& density, double storms_per_year,
                              double return_period) {
  if (!(storms_per_year > 0.0)) throw std::invalid_argument("storm rate must be positive");
  if (!(return_period > 1.0)) throw std::invalid_argument("return period must exceed one year");
  const double target = 1.0 - 1.0 / return_period;
  std::vector<double> pooled;
  for (const auto& m : rg.maxima) pooled.insert(pooled.end(), m.begin(), m.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  if (pooled.empty()) throw std::runtime_error("response grid is empty");
  auto reached = [&](double r) {
    return std::exp(-storms_per_year * (1.0 - pooled_response_cdf(rg, density, r))) >= target;
  };
  if (reached(pooled.front()) || !reached(pooled.back()))
    throw std::runtime_error("no 50-year response level inside the pooled response range");
  std::size_t lo = 0, hi = pooled.size() - 1;  // reached(lo) false, reached(hi) true
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (reached(pooled[mid]) ? hi : lo) = mid;
  }
  return pooled[hi];
}

}  // namespace failprob
