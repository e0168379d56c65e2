#include "failprob/extremes.hpp"

#include "failprob/density.hpp"
#include "failprob/optimize.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace failprob {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHoursPerYear = 24.0 * 365.25;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

double parse_timestamp_hours(const std::string& ts) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  char sep = 0;
  const int got = std::sscanf(ts.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &s);
  if (got >= 3 && mo >= 1) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw std::invalid_argument("invalid date in timestamp: " + ts);
    const double days = static_cast<double>(sys_days{ymd}.time_since_epoch().count());
    return days * 24.0 + (got >= 5 ? h : 0) + (got >= 6 ? mi / 60.0 : 0.0) + (got >= 7 ? s / 3600.0 : 0.0);
  }
  std::size_t used = 0;
  const double v = std::stod(ts, &used);
  if (used != ts.size()) throw std::invalid_argument("unrecognized timestamp: " + ts);
  return v;
}

std::vector<HindcastRow> read_hindcast_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("hindcast CSV is empty");
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("hindcast CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_ts = col("timestamp"), c_hs = col("hs"), c_tp = col("tp"), c_te = col("te"), c_tm = col("tm");
  std::vector<HindcastRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() < header.size()) throw std::runtime_error("short row at line " + std::to_string(lineno));
    HindcastRow r;
    r.timestamp = cells[c_ts];
    r.hours = parse_timestamp_hours(r.timestamp);
    r.hs = std::stod(cells[c_hs]);
    r.tp = std::stod(cells[c_tp]);
    r.te = std::stod(cells[c_te]);
    r.tm = std::stod(cells[c_tm]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<HindcastRow> read_hindcast_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open hindcast " + path);
  return read_hindcast_csv(is);
}

double steepness(double hs, double te) { return 2.0 * std::numbers::pi * hs / (kGravity * te * te); }

double StormPeakSet::storms_per_year() const { return years > 0.0 ? static_cast<double>(peaks.size()) / years : 0.0; }

StormPeakSet isolate_storm_peaks(const std::vector<double>& hours, const std::vector<double>& hs,
                                 const std::vector<double>& se, double h_st, double merge_hours) {
  if (hs.empty()) throw std::invalid_argument("storm peak isolation needs a nonempty series");
  if (hours.size() != hs.size() || se.size() != hs.size()) throw std::invalid_argument("series lengths differ");
  for (std::size_t i = 1; i < hours.size(); ++i) {
    if (!(hours[i] > hours[i - 1])) throw std::invalid_argument("series must be strictly time-ordered");
  }
  StormPeakSet out;
  out.h_st = h_st;
  out.merge_hours = merge_hours;
  out.years = (hours.back() - hours.front()) / kHoursPerYear;

  std::vector<StormPeak> raw;
  std::size_t i = 0;
  while (i < hs.size()) {
    if (!(hs[i] > h_st)) {
      ++i;
      continue;
    }
    std::size_t best = i;
    while (i < hs.size() && hs[i] > h_st) {
      if (hs[i] > hs[best]) best = i;
      ++i;
    }
    raw.push_back({best, hours[best], hs[best], se[best]});
  }
  for (const auto& p : raw) {
    if (!out.peaks.empty() && p.hours - out.peaks.back().hours <= merge_hours) {
      if (p.hs > out.peaks.back().hs) out.peaks.back() = p;
    } else {
      out.peaks.push_back(p);
    }
  }
  return out;
}

StormPeakSet isolate_storm_peaks(const std::vector<HindcastRow>& series, double h_st, double merge_hours) {
  std::vector<double> hours, hs, se;
  for (const auto& r : series) {
    hours.push_back(r.hours);
    hs.push_back(r.hs);
    se.push_back(steepness(r.hs, r.te));
  }
  return isolate_storm_peaks(hours, hs, se, h_st, merge_hours);
}

double gpd_nll(const std::vector<double>& y, double sigma, double xi) {
  if (!(sigma > 0.0) || !(xi > -1.0)) return kInf;
  const double n = static_cast<double>(y.size());
  if (std::abs(xi) < 1e-9) {
    double s = 0.0;
    for (double v : y) s += v;
    return n * std::log(sigma) + s / sigma;
  }
  double s = 0.0;
  for (double v : y) {
    const double t = 1.0 + xi * v / sigma;
    if (!(t > 0.0)) return kInf;
    s += std::log(t);
  }
  return n * std::log(sigma) + (1.0 + 1.0 / xi) * s;
}

double gpd_survival(double y, double sigma, double xi) {
  if (y <= 0.0) return 1.0;
  if (std::abs(xi) < 1e-12) return std::exp(-y / sigma);
  const double t = 1.0 + xi * y / sigma;
  if (t <= 0.0) return 0.0;
  return std::pow(t, -1.0 / xi);
}

double gpd_cdf(double y, double sigma, double xi) { return 1.0 - gpd_survival(y, sigma, xi); }

double gpd_quantile_survival(double s, double sigma, double xi) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("GPD exceedance probability outside [0,1]");
  if (std::abs(xi) < 1e-12) return s == 0.0 ? kInf : -sigma * std::log(s);
  if (s == 0.0) return xi < 0.0 ? -sigma / xi : kInf;
  return sigma / xi * std::expm1(-xi * std::log(s));
}

double gpd_quantile(double p, double sigma, double xi) { return gpd_quantile_survival(1.0 - p, sigma, xi); }

double gpd_sample(double sigma, double xi, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double s = 0.0;
  while (s == 0.0) s = 1.0 - unif(rng);
  return gpd_quantile_survival(s, sigma, xi);
}

GpdFit gpd_fit(const std::vector<double>& y) {
  if (y.size() < 30) throw std::invalid_argument("GPD fit needs at least 30 excesses");
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n - 1.0;
  const double ymax = *std::max_element(y.begin(), y.end());

  const auto nll_log = [&](const Eigen::VectorXd& z) { return gpd_nll(y, std::exp(z[0]), z[1]); };
  const Objective obj = with_numeric_gradient(nll_log, 1e-7);
  const double xi_mom = std::clamp(0.5 * (1.0 - mean * mean / var), -0.9, 2.0);
  const double sigma_mom = 0.5 * mean * (mean * mean / var + 1.0);
  std::vector<std::array<double, 2>> starts{{mean, 0.1}, {mean, -0.1}, {sigma_mom, xi_mom}};

  Eigen::VectorXd lo(2), hi(2);
  lo << std::log(mean * 1e-6), -0.999;
  hi << std::log(mean * 1e4), 5.0;
  BoxOptions opts;
  opts.max_iter = 500;
  opts.ftol = 1e-15;
  opts.gtol = 1e-9;
  opts.max_step = 0.5;

  GpdFit best;
  best.nll = kInf;
  std::ostringstream trace;
  for (auto [s0, x0] : starts) {
    if (x0 < 0.0) s0 = std::max(s0, -1.1 * x0 * ymax);
    Eigen::VectorXd z0(2);
    z0 << std::log(s0), x0;
    const OptResult r = minimize_box(obj, z0, lo, hi, opts);
    trace << " start(" << s0 << "," << x0 << ")->nll " << r.value;
    if (std::isfinite(r.value) && r.value < best.nll) {
      best.nll = r.value;
      best.sigma = std::exp(r.x[0]);
      best.xi = r.x[1];
      best.converged = r.converged;
    }
  }
  if (!std::isfinite(best.nll)) throw std::runtime_error("GPD fit failed to converge:" + trace.str());
  best.n = y.size();
  const auto nll_plain = [&](const Eigen::VectorXd& p) { return gpd_nll(y, p[0], p[1]); };
  Eigen::VectorXd at(2);
  at << best.sigma, best.xi;
  const Eigen::MatrixXd h = numeric_hessian(nll_plain, at, 1e-5);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success && h.allFinite()) {
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(2, 2));
    best.se_sigma = std::sqrt(cov(0, 0));
    best.se_xi = std::sqrt(cov(1, 1));
  } else {
    best.se_sigma = best.se_xi = std::nan("");
  }
  return best;
}

MarginalModel::MarginalModel(std::vector<double> data, double quantile_level) : level_(quantile_level) {
  if (data.size() < 2) throw std::invalid_argument("marginal model needs data");
  if (!(quantile_level > 0.0 && quantile_level < 1.0)) throw std::invalid_argument("threshold level must lie in (0,1)");
  std::sort(data.begin(), data.end());
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (i + 1 < data.size() && data[i + 1] == data[i]) continue;
    values_.push_back(data[i]);
    probs_.push_back(static_cast<double>(i + 1) / (n + 1.0));
  }
  const double pos = quantile_level * (n - 1.0);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  u_ = k + 1 < data.size() ? data[k] + (pos - static_cast<double>(k)) * (data[k + 1] - data[k]) : data.back();
  f_u_ = empirical_cdf(u_);
  std::vector<double> excess;
  for (double v : data) {
    if (v > u_) excess.push_back(v - u_);
  }
  gpd_ = gpd_fit(excess);
}

double MarginalModel::empirical_cdf(double x) const {
  if (x < values_.front()) return 0.0;
  if (x >= values_.back()) return probs_.back();
  const auto it = std::upper_bound(values_.begin(), values_.end(), x);
  const auto k = static_cast<std::size_t>(it - values_.begin()) - 1;
  const double t = (x - values_[k]) / (values_[k + 1] - values_[k]);
  return probs_[k] + t * (probs_[k + 1] - probs_[k]);
}

double MarginalModel::empirical_quantile(double p) const {
  if (p <= probs_.front()) return values_.front();
  if (p >= probs_.back()) return values_.back();
  const auto it = std::lower_bound(probs_.begin(), probs_.end(), p);
  const auto k = static_cast<std::size_t>(it - probs_.begin());
  const double t = (p - probs_[k - 1]) / (probs_[k] - probs_[k - 1]);
  return values_[k - 1] + t * (values_[k] - values_[k - 1]);
}

double MarginalModel::cdf(double x) const {
  if (x <= u_) return empirical_cdf(x);
  return f_u_ + (1.0 - f_u_) * gpd_cdf(x - u_, gpd_.sigma, gpd_.xi);
}

double MarginalModel::survival(double x) const {
  if (x <= u_) return 1.0 - empirical_cdf(x);
  return (1.0 - f_u_) * gpd_survival(x - u_, gpd_.sigma, gpd_.xi);
}

double MarginalModel::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
  if (p <= f_u_) return empirical_quantile(p);
  return u_ + gpd_quantile((p - f_u_) / (1.0 - f_u_), gpd_.sigma, gpd_.xi);
}

double MarginalModel::quantile_survival(double s) const {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("exceedance probability must lie in (0,1)");
  if (s >= 1.0 - f_u_) return empirical_quantile(1.0 - s);
  return u_ + gpd_quantile_survival(s / (1.0 - f_u_), gpd_.sigma, gpd_.xi);
}

double MarginalModel::upper_endpoint() const { return gpd_.xi < 0.0 ? u_ - gpd_.sigma / gpd_.xi : kInf; }

double MarginalModel::to_laplace(double x, bool* guarded) const {
  const double f = cdf(x);
  const double s = survival(x);
  bool g = false;
  double z = 0.0;
  if (f <= 0.0) {
    z = -kLaplaceGuard;
    g = true;
  } else if (s <= 0.0) {
    z = kLaplaceGuard;
    g = true;
  } else {
    z = f < 0.5 ? std::log(2.0 * f) : -std::log(2.0 * s);
    if (std::abs(z) > kLaplaceGuard) {
      z = std::copysign(kLaplaceGuard, z);
      g = true;
    }
  }
  if (guarded) *guarded = g;
  return z;
}

double MarginalModel::from_laplace(double z) const {
  if (z < 0.0) return quantile(0.5 * std::exp(z));
  return quantile_survival(0.5 * std::exp(-z));
}

double laplace_from_uniform(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must lie in (0,1)");
  return p < 0.5 ? std::log(2.0 * p) : -std::log(2.0 * (1.0 - p));
}

double uniform_from_laplace(double z) { return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z); }

namespace {

// Three-valued logic mirroring R's NA propagation in the reference constraint check.
enum class Tri { f, t, na };

Tri tri_le(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return Tri::na;
  return a <= b ? Tri::t : Tri::f;
}

Tri tri_gt(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return Tri::na;
  return a > b ? Tri::t : Tri::f;
}

Tri operator&&(Tri a, Tri b) {
  if (a == Tri::f || b == Tri::f) return Tri::f;
  if (a == Tri::na || b == Tri::na) return Tri::na;
  return Tri::t;
}

Tri operator||(Tri a, Tri b) {
  if (a == Tri::t || b == Tri::t) return Tri::t;
  if (a == Tri::na || b == Tri::na) return Tri::na;
  return Tri::f;
}

double rmin(std::initializer_list<double> xs) {
  double m = kInf;
  for (double x : xs) {
    if (std::isnan(x)) return std::nan("");
    m = std::min(m, x);
  }
  return m;
}

}  // namespace

bool keef_constraints_ok(double a, double b, const std::array<double, 2>& z, const std::array<double, 2>& zpos,
                         const std::array<double, 2>& zneg, double v) {
  const double vb = std::pow(v, b - 1.0);
  const double e = -b / (1.0 - b);
  const double p = 1.0 / (1.0 - b);
  const double k = 1.0 - 1.0 / b;

  const Tri c1e = tri_le(a, rmin({1.0, 1.0 - b * z[0] * vb, 1.0 - vb * z[0] + zpos[0] / v})) &&
                  tri_le(a, rmin({1.0, 1.0 - b * z[1] * vb, 1.0 - vb * z[1] + zpos[1] / v}));
  const Tri c1o = tri_le(a, 1.0) && tri_gt(a, 1.0 - b * z[0] * vb) && tri_gt(a, 1.0 - b * z[1] * vb) &&
                  tri_gt(k * std::pow(b * z[0], p) * std::pow(1.0 - a, e) + zpos[0], 0.0) &&
                  tri_gt(k * std::pow(b * z[1], p) * std::pow(1.0 - a, e) + zpos[1], 0.0);
  const Tri c2e = tri_le(-a, rmin({1.0, 1.0 + b * vb * z[0], 1.0 + vb * z[0] - zneg[0] / v})) &&
                  tri_le(-a, rmin({1.0, 1.0 + b * vb * z[1], 1.0 + vb * z[1] - zneg[1] / v}));
  const Tri c2o = tri_le(-a, 1.0) && tri_gt(-a, 1.0 + b * vb * z[0]) && tri_gt(-a, 1.0 + b * vb * z[1]) &&
                  tri_gt(k * std::pow(-b * z[0], p) * std::pow(1.0 + a, e) - zneg[0], 0.0) &&
                  tri_gt(k * std::pow(-b * z[1], p) * std::pow(1.0 + a, e) - zneg[1], 0.0);
  if (c1e == Tri::na || c1o == Tri::na || c2e == Tri::na || c2o == Tri::na) return false;
  return ((c1e || c1o) && (c2e || c2o)) == Tri::t;
}

namespace {

struct ProfileTerms {
  double nll = kInf;
  double mu = 0.0;
  double sd = 0.0;
};

ProfileTerms profile_nll(const std::vector<double>& x, const std::vector<double>& y, double a, double b, double v,
                         bool constrain) {
  const std::size_t n = x.size();
  std::vector<double> z(n);
  double sum_logx = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xb = std::pow(x[i], b);
    z[i] = (y[i] - a * x[i]) / xb;
    mean += z[i];
    sum_logx += std::log(x[i]);
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double zi : z) var += (zi - mean) * (zi - mean);
  var = std::max(var / static_cast<double>(n), 1e-12);
  ProfileTerms out;
  if (constrain) {
    std::array<double, 2> zr{kInf, -kInf}, zpos{kInf, -kInf}, zneg{kInf, -kInf};
    for (std::size_t i = 0; i < n; ++i) {
      zr = {std::min(zr[0], z[i]), std::max(zr[1], z[i])};
      zpos = {std::min(zpos[0], y[i] - x[i]), std::max(zpos[1], y[i] - x[i])};
      zneg = {std::min(zneg[0], y[i] + x[i]), std::max(zneg[1], y[i] + x[i])};
    }
    if (!keef_constraints_ok(a, b, zr, zpos, zneg, v)) return out;
  }
  const double nd = static_cast<double>(n);
  out.nll = b * sum_logx + 0.5 * nd * std::log(2.0 * std::numbers::pi * var) + 0.5 * nd;
  out.mu = mean;
  out.sd = std::sqrt(var);
  return out;
}

}  // namespace

CondExtFit condext_fit(const std::vector<std::array<double, 2>>& pairs, double v, double delta_ht) {
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    if (p[0] > v) {
      x.push_back(p[0]);
      y.push_back(p[1]);
    }
  }
  if (x.size() < 30) throw std::invalid_argument("conditional extremes fit needs at least 30 exceedances of v");
  if (v <= 0.0) throw std::invalid_argument("conditioning threshold must be positive on the Laplace scale");
  const double cv = *std::max_element(x.begin(), x.end());

  const auto nll2 = [&](const Eigen::VectorXd& p) { return profile_nll(x, y, p[0], p[1], cv, true).nll; };
  const Objective obj = with_numeric_gradient(nll2, 1e-7);
  Eigen::VectorXd lo(2), hi(2);
  lo << -1.0, -3.0;
  hi << 1.0, 1.0 - 1e-6;
  BoxOptions opts;
  opts.max_iter = 400;
  opts.ftol = 1e-13;
  opts.gtol = 1e-8;
  opts.max_step = 0.25;

  CondExtFit fit;
  fit.v = v;
  fit.delta_ht = delta_ht;
  fit.constraint_v = cv;
  fit.n_exceed = x.size();
  fit.nll = kInf;
  const std::vector<std::array<double, 2>> starts{{0.5, 0.3}, {0.1, 0.1}, {0.9, 0.1}, {-0.5, 0.1}, {0.0, -0.5},
                                                  {0.99, 0.0}};
  std::ostringstream trace;
  for (const auto& s : starts) {
    Eigen::VectorXd z0(2);
    z0 << s[0], s[1];
    if (!std::isfinite(nll2(z0))) continue;
    const OptResult r = minimize_box(obj, z0, lo, hi, opts);
    trace << " start(" << s[0] << "," << s[1] << ")->nll " << r.value;
    if (std::isfinite(r.value) && r.value < fit.nll) {
      fit.nll = r.value;
      fit.alpha = r.x[0];
      fit.beta = r.x[1];
      fit.converged = r.converged;
    }
  }
  if (!std::isfinite(fit.nll)) throw std::runtime_error("conditional extremes fit did not converge:" + trace.str());
  const ProfileTerms t = profile_nll(x, y, fit.alpha, fit.beta, cv, false);
  fit.mu = t.mu;
  fit.sd = t.sd;
  for (std::size_t i = 0; i < x.size(); ++i) fit.residuals.push_back((y[i] - fit.alpha * x[i]) / std::pow(x[i], fit.beta));

  const auto free_nll = [&](const Eigen::VectorXd& p) { return profile_nll(x, y, p[0], p[1], cv, false).nll; };
  Eigen::VectorXd at(2);
  at << fit.alpha, fit.beta;
  const Eigen::MatrixXd h = numeric_hessian(free_nll, at, 1e-4);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success && h.allFinite()) {
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(2, 2));
    fit.se_alpha = std::sqrt(cov(0, 0));
    fit.se_beta = std::sqrt(cov(1, 1));
  } else {
    fit.se_alpha = fit.se_beta = std::nan("");
  }
  return fit;
}

std::vector<std::array<double, 2>> condext_simulate_laplace(const CondExtFit& fit, std::size_t n_sm, Rng& rng) {
  if (fit.residuals.empty()) throw std::invalid_argument("conditional extremes fit has no residuals");
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, fit.residuals.size() - 1);
  std::vector<std::array<double, 2>> out;
  out.reserve(n_sm);
  std::size_t attempts = 0;
  const std::size_t max_attempts = std::max<std::size_t>(1000 * n_sm, 1000);
  while (out.size() < n_sm) {
    if (++attempts > max_attempts)
      throw std::runtime_error("conditional extremes simulation: rejection rate above 99.9%");
    const double xc = fit.v + expo(rng);
    const double z = fit.residuals[pick(rng)] + fit.delta_ht * normal(rng);
    const double xo = fit.alpha * xc + std::pow(xc, fit.beta) * z;
    if (xo > xc) continue;
    out.push_back({xc, xo});
  }
  return out;
}

std::vector<std::array<double, 2>> condext_simulate(const CondExtFit& fit, const MarginalModel& cond_margin,
                                                    const MarginalModel& other_margin, std::size_t n_sm, Rng& rng) {
  auto pts = condext_simulate_laplace(fit, n_sm, rng);
  for (auto& p : pts) {
    p[0] = cond_margin.from_laplace(std::min(p[0], kLaplaceGuard));
    p[1] = other_margin.from_laplace(std::clamp(p[1], -kLaplaceGuard, kLaplaceGuard));
  }
  return pts;
}

double GriddedDensity::total_mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.cell_area();
}

double GriddedDensity::at(const EnvPoint& x) const {
  const auto idx = grid.index_of(x);
  return idx ? values[*idx] : 0.0;
}

void EnvModelConfig::validate() const {
  if (!(marginal_quantile > 0.0 && marginal_quantile < 1.0)) throw std::invalid_argument("marginal quantile in (0,1)");
  if (!(conditioning_quantile > 0.5 && conditioning_quantile < 1.0))
    throw std::invalid_argument("conditioning quantile must lie in (0.5,1) so that v > 0");
  if (!(delta_ht >= 0.0)) throw std::invalid_argument("residual bandwidth must be nonnegative");
  if (n_sm < 1) throw std::invalid_argument("n_sm must be at least 1");
  if (grid.dim() != 2) throw std::invalid_argument("environment grid must be 2-D");
}

GriddedDensity gridded_density(const StormPeakSet& peaks, const CondExtFit& fit, const MarginalModel& hs_margin,
                               const MarginalModel& se_margin, const EnvGrid& grid, std::size_t n_sm, Rng& rng) {
  GriddedDensity out{grid, std::vector<double>(grid.size(), 0.0), std::vector<CellRegion>(grid.size()), 0.0, 0.0,
                     0.0, {}};
  out.hs_splice = hs_margin.from_laplace(fit.v);
  const double n = static_cast<double>(peaks.peaks.size());

  std::vector<EnvPoint> lower_pts;
  std::size_t lower_in_box = 0;
  for (const auto& p : peaks.peaks) {
    if (p.hs <= out.hs_splice) {
      EnvPoint x(2);
      x << p.hs, p.se;
      if (grid.box().contains(x)) ++lower_in_box;
      lower_pts.push_back(std::move(x));
    }
  }
  out.lower_mass = static_cast<double>(lower_pts.size()) / n;
  out.upper_mass = 1.0 - out.lower_mass;

  for (std::size_t i = 0; i < grid.size(); ++i)
    out.regions[i] = grid.center(i)[0] <= out.hs_splice ? CellRegion::lower : CellRegion::upper;

  if (lower_pts.size() >= 2) {
    Eigen::MatrixXd sample(static_cast<Eigen::Index>(lower_pts.size()), 2);
    for (std::size_t i = 0; i < lower_pts.size(); ++i) sample.row(static_cast<Eigen::Index>(i)) = lower_pts[i].transpose();
    const Eigen::VectorXd h = scott_bandwidth(sample);
    out.lower_bandwidth = h;
    std::vector<double> piece(grid.size(), 0.0);
    double piece_sum = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (out.regions[i] != CellRegion::lower) continue;
      const EnvPoint c = grid.center(i);
      double s = 0.0;
      for (Eigen::Index k = 0; k < sample.rows(); ++k) {
        const double d0 = (c[0] - sample(k, 0)) / h[0];
        const double d1 = (c[1] - sample(k, 1)) / h[1];
        s += std::exp(-0.5 * (d0 * d0 + d1 * d1));
      }
      piece[i] = s;
      piece_sum += s;
    }
    if (piece_sum > 0.0) {
      const double target = out.lower_mass * static_cast<double>(lower_in_box) / static_cast<double>(lower_pts.size());
      const double scale = target / (piece_sum * grid.cell_area());
      for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] += piece[i] * scale;
    }
  }

  const auto sims = condext_simulate(fit, hs_margin, se_margin, n_sm, rng);
  std::size_t counted = 0;
  std::vector<double> counts(grid.size(), 0.0);
  for (const auto& s : sims) {
    EnvPoint x(2);
    x << s[0], s[1];
    if (const auto idx = grid.index_of(x)) {
      counts[*idx] += 1.0;
      ++counted;
    }
  }
  if (counted == 0) throw std::runtime_error("no simulated upper-region point fell inside the grid");
  const double per = out.upper_mass / (static_cast<double>(n_sm) * grid.cell_area());
  for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] += counts[i] * per;
  return out;
}

EnvironmentModel build_environment_model(const StormPeakSet& peaks, const EnvModelConfig& config, Rng& rng) {
  config.validate();
  std::vector<double> hs, se;
  for (const auto& p : peaks.peaks) {
    hs.push_back(p.hs);
    se.push_back(p.se);
  }
  MarginalModel hs_m(hs, config.marginal_quantile);
  MarginalModel se_m(se, config.marginal_quantile);
  std::vector<std::array<double, 2>> pairs;
  for (std::size_t i = 0; i < hs.size(); ++i) pairs.push_back({hs_m.to_laplace(hs[i]), se_m.to_laplace(se[i])});
  const double v = laplace_from_uniform(config.conditioning_quantile);
  CondExtFit fit = condext_fit(pairs, v, config.delta_ht);
  GriddedDensity dens = gridded_density(peaks, fit, hs_m, se_m, config.grid, config.n_sm, rng);
  return EnvironmentModel{std::move(hs_m), std::move(se_m), std::move(fit), std::move(dens), peaks.storms_per_year()};
}

nlohmann::json environment_sidecar(const EnvironmentModel& m) {
  auto margin = [](const MarginalModel& mm) {
    return nlohmann::json{{"threshold_level", mm.threshold_level()},
                          {"threshold", mm.threshold()},
                          {"gpd_sigma", mm.gpd().sigma},
                          {"gpd_xi", mm.gpd().xi},
                          {"gpd_se_sigma", mm.gpd().se_sigma},
                          {"gpd_se_xi", mm.gpd().se_xi}};
  };
  const auto& d = m.density;
  return nlohmann::json{
      {"hs", margin(m.hs)},
      {"se", margin(m.se)},
      {"conditional",
       {{"v", m.fit.v}, {"alpha", m.fit.alpha}, {"beta", m.fit.beta}, {"mu", m.fit.mu}, {"sd", m.fit.sd},
        {"se_alpha", m.fit.se_alpha}, {"se_beta", m.fit.se_beta}, {"delta_ht", m.fit.delta_ht},
        {"n_exceed", m.fit.n_exceed}}},
      {"hs_splice", d.hs_splice},
      {"lower_mass", d.lower_mass},
      {"upper_mass", d.upper_mass},
      {"total_mass", d.total_mass()},
      {"lower_bandwidth", std::vector<double>(d.lower_bandwidth.data(), d.lower_bandwidth.data() + d.lower_bandwidth.size())},
      {"storms_per_year", m.storms_per_year}};
}

StormPeakSet synthetic_storm_peaks(const SyntheticPeakParams& prm, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  StormPeakSet out;
  out.h_st = prm.hs_floor;
  out.years = prm.years;
  const double spacing = prm.years * kHoursPerYear / static_cast<double>(prm.n_peaks);
  const double c = std::sqrt(1.0 - prm.rho * prm.rho);
  for (std::size_t i = 0; i < prm.n_peaks; ++i) {
    const double z1 = normal(rng);
    const double z2 = prm.rho * z1 + c * normal(rng);
    const double s1 = std::clamp(1.0 - normal_cdf(z1), 1e-300, 1.0);
    const double u2 = std::clamp(normal_cdf(z2), 1e-12, 1.0 - 1e-12);
    StormPeak p;
    p.row = i;
    p.hours = static_cast<double>(i) * spacing;
    p.hs = prm.hs_floor + gpd_quantile_survival(s1, prm.hs_sigma, prm.hs_xi);
    p.se = prm.se_lo + (prm.se_hi - prm.se_lo) * boost::math::ibeta_inv(prm.se_shape_a, prm.se_shape_b, u2);
    out.peaks.push_back(p);
  }
  return out;
}

}  // namespace failprob
