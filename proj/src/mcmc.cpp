#include "failprob/mcmc.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace failprob {

void PtConfig::validate() const {
  if (n_chains < 2) throw std::invalid_argument("parallel tempering needs at least two chains");
  if (n_steps < 2) throw std::invalid_argument("n_steps must be at least 2");
  if (t_min != 1.0) throw std::invalid_argument("the cold chain temperature must be 1");
  if (!(t_max > t_min)) throw std::invalid_argument("T_max must exceed T_min");
  if (!(sigma_mh > 0.0)) throw std::invalid_argument("sigma_mh must be positive");
  if (swap_interval < 1) throw std::invalid_argument("swap_interval must be at least 1");
  if (!(freeze_fraction >= 0.0 && freeze_fraction <= 1.0)) throw std::invalid_argument("freeze_fraction in [0,1]");
}

std::vector<double> PtConfig::initial_ladder() const {
  std::vector<double> t(n_chains);
  for (std::size_t i = 0; i < n_chains; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n_chains - 1);
    t[i] = t_min * std::pow(t_max / t_min, frac);
  }
  t.front() = t_min;
  t.back() = t_max;
  return t;
}

double mh_accept_prob(double log_current, double log_proposed, double temperature) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  if (log_proposed == ninf) return 0.0;
  if (log_current == ninf) return 1.0;
  const double e = (log_proposed - log_current) / temperature;
  return e >= 0.0 ? 1.0 : std::exp(e);
}

double swap_accept_prob(double log_pi_i, double log_pi_j, double t_i, double t_j) {
  if (t_i == t_j || log_pi_i == log_pi_j) return 1.0;
  const double e = (log_pi_j - log_pi_i) * (1.0 / t_i - 1.0 / t_j);
  if (std::isnan(e)) return 1.0;
  return e >= 0.0 ? 1.0 : std::exp(e);
}

double reflect_into(double v, double lo, double hi) {
  const double w = hi - lo;
  double y = std::fmod(v - lo, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  if (y > w) y = 2.0 * w - y;
  return lo + y;
}

PtSample pt_sample(const LogTarget& target, const Box& box, const PtConfig& config, Rng& rng, bool keep_records) {
  config.validate();
  const std::size_t nc = config.n_chains;
  const auto d = static_cast<Eigen::Index>(box.dim());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  PtSample out;
  out.ladder = config.initial_ladder();
  std::vector<double> log_gap(nc - 1);
  for (std::size_t i = 0; i + 1 < nc; ++i) log_gap[i] = std::log(std::log(out.ladder[i + 1] / out.ladder[i]));
  std::vector<double> log_sigma(nc, std::log(config.sigma_mh));

  std::vector<EnvPoint> state(nc, EnvPoint(d));
  std::vector<double> logp(nc);
  bool any_finite = false;
  for (std::size_t j = 0; j < nc; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) state[j][k] = box[k].lo + unif(rng) * box[k].width();
    logp[j] = target(state[j]);
    ++out.target_evals;
    any_finite = any_finite || std::isfinite(logp[j]);
  }
  if (!any_finite)
    throw std::runtime_error("all initial chain states have zero target density; widen the initialization box");

  out.cold.resize(static_cast<Eigen::Index>(config.n_steps), d);
  out.cold_logpost.resize(config.n_steps);
  out.cold.row(0) = state[0].transpose();
  out.cold_logpost[0] = logp[0];
  std::vector<double> accepted(nc, 0.0), swaps(nc - 1, 0.0);
  std::size_t n_sweeps = 0;
  auto record = [&](std::size_t step, std::size_t j, bool acc) {
    if (keep_records) out.records.push_back({step, j, out.ladder[j], state[j], logp[j], acc});
  };
  for (std::size_t j = 0; j < nc; ++j) record(0, j, true);

  const auto freeze_at = static_cast<std::size_t>(config.freeze_fraction * static_cast<double>(config.n_steps));
  const double log_span = std::log(config.t_max / config.t_min);

  for (std::size_t step = 1; step < config.n_steps; ++step) {
    const bool adapting = config.adapt && step < freeze_at;
    const double gain = 1.0 / (1.0 + static_cast<double>(step) / config.gain_t0);
    for (std::size_t j = 0; j < nc; ++j) {
      EnvPoint prop(d);
      const double s = std::exp(log_sigma[j]);
      for (Eigen::Index k = 0; k < d; ++k) prop[k] = reflect_into(state[j][k] + s * normal(rng), box[k].lo, box[k].hi);
      const double lp = target(prop);
      ++out.target_evals;
      const double a = mh_accept_prob(logp[j], lp, out.ladder[j]);
      const bool acc = unif(rng) < a;
      if (acc) {
        state[j] = std::move(prop);
        logp[j] = lp;
        accepted[j] += 1.0;
      }
      if (adapting) log_sigma[j] += gain * (a - config.target_accept);
      record(step, j, acc);
    }
    if (step % config.swap_interval == 0) {
      ++n_sweeps;
      std::vector<double> rates(nc - 1);
      for (std::size_t i = 0; i + 1 < nc; ++i) {
        const double a = swap_accept_prob(logp[i], logp[i + 1], out.ladder[i], out.ladder[i + 1]);
        rates[i] = a;
        swaps[i] += a;
        if (unif(rng) < a) {
          std::swap(state[i], state[i + 1]);
          std::swap(logp[i], logp[i + 1]);
        }
      }
      if (adapting) {
        const double mean_rate = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(nc - 1);
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < nc; ++i) {
          log_gap[i] += gain * (rates[i] - mean_rate);
          total += std::exp(log_gap[i]);
        }
        const double shift = std::log(log_span / total);
        double log_t = std::log(config.t_min);
        for (std::size_t i = 0; i + 1 < nc; ++i) {
          log_gap[i] += shift;
          log_t += std::exp(log_gap[i]);
          out.ladder[i + 1] = std::exp(log_t);
        }
        out.ladder.back() = config.t_max;
      }
    }
    out.cold.row(static_cast<Eigen::Index>(step)) = state[0].transpose();
    out.cold_logpost[step] = logp[0];
  }

  const double moves = static_cast<double>(config.n_steps - 1);
  for (std::size_t j = 0; j < nc; ++j) {
    out.accept_rate.push_back(accepted[j] / moves);
    out.sigma.push_back(std::exp(log_sigma[j]));
  }
  for (std::size_t i = 0; i + 1 < nc; ++i) out.swap_rate.push_back(n_sweeps ? swaps[i] / n_sweeps : 0.0);

  if (config.n_steps >= 50) {
    const GewekeResult g = geweke_burnin(out.cold);
    out.burn_in_fallback = !g.qualified;
    out.burn_in = g.qualified ? g.index : config.n_steps / 2;
  }
  return out;
}

double spectral_density_zero(const Eigen::VectorXd& series) {
  const Eigen::Index n = series.size();
  if (n < 2) return 0.0;
  const Eigen::VectorXd c = series.array() - series.mean();
  const auto lag = static_cast<Eigen::Index>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
  auto autocov = [&](Eigen::Index k) {
    return c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n);
  };
  double s = autocov(0);
  const double gamma0 = s;
  for (Eigen::Index k = 1; k <= std::min(lag, n - 1); ++k) {
    s += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(lag + 1)) * autocov(k);
  }
  return s > 0.0 ? s : gamma0;
}

double geweke_z(const Eigen::VectorXd& series, double first, double last) {
  const Eigen::Index n = series.size();
  const auto na = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::floor(first * static_cast<double>(n))));
  const auto nb = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::floor(last * static_cast<double>(n))));
  const Eigen::VectorXd a = series.head(na);
  const Eigen::VectorXd b = series.tail(nb);
  const double diff = a.mean() - b.mean();
  const double var = spectral_density_zero(a) / static_cast<double>(na) + spectral_density_zero(b) / static_cast<double>(nb);
  if (!(var > 0.0)) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / std::sqrt(var);
}

GewekeResult geweke_burnin(const Eigen::MatrixXd& chain) {
  const Eigen::Index n = chain.rows();
  if (n < 50) throw std::invalid_argument("Geweke diagnostic needs a chain of at least 50 states");
  for (int tenth = 0; tenth < 10; ++tenth) {
    const Eigen::Index start = tenth * n / 10;
    bool ok = true;
    for (Eigen::Index k = 0; k < chain.cols() && ok; ++k) {
      const Eigen::VectorXd tail = chain.col(k).tail(n - start);
      ok = std::abs(geweke_z(tail)) < 2.0;
    }
    if (ok) return {static_cast<std::size_t>(start), true};
  }
  return {static_cast<std::size_t>(n), false};
}

void write_chain_csv(std::ostream& os, const std::vector<ChainRecord>& records) {
  os << "step,chain,temp,x1,x2,logpost,accepted\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%d\n", r.step, r.chain, r.temp, r.x[0], r.x[1],
                  r.logpost, r.accepted ? 1 : 0);
    os << buf;
  }
}

}  // namespace failprob
