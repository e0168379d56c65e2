#include "failprob/acquisition.hpp"

#include "failprob/log.hpp"
#include "failprob/sampling.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace failprob {

namespace {

constexpr double kMinPositive = std::numeric_limits<double>::min();
constexpr double kAlcFloor = 1e-300;

}  // namespace

void AgeConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");
  if (n_iter < 1) throw std::invalid_argument("n_iter must be at least 1");
  if (n_init < 2) throw std::invalid_argument("n_init must be at least 2");
  if (n_rl_per_point < 1) throw std::invalid_argument("n_rl_per_point must be at least 1");
  if (utility == UtilityKind::alc && n_ref < 1) throw std::invalid_argument("n_ref must be at least 1");
  init_params.validate();
}

EnvPoint AgeConfig::to_gp_space(const EnvPoint& x) const {
  if (input_scaling == InputScaling::none) return x;
  const Box& b = candidate_grid.box();
  EnvPoint y = x;
  for (std::size_t k = 0; k < b.dim(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    y[kk] = (x[kk] - b[k].lo) / b[k].width();
  }
  return y;
}

EnvGrid AgeConfig::gp_space_grid(const EnvGrid& g) const {
  if (input_scaling == InputScaling::none) return g;
  const EnvPoint lo = to_gp_space(g.box().lower()), hi = to_gp_space(g.box().upper());
  std::vector<Interval> dims;
  for (Eigen::Index k = 0; k < lo.size(); ++k) dims.push_back({lo[k], hi[k]});
  return EnvGrid(Box(std::move(dims)), g.counts());
}

double mix_utility(double log_term, double lambda, double cde_est) {
  return lambda * log_term + (1.0 - lambda) * std::log(std::max(cde_est, kMinPositive));
}

double utility_u1(double post_var, double lambda, double cde_est_at_x) {
  return mix_utility(std::log(std::max(post_var, kMinPositive)), lambda, cde_est_at_x);
}

double utility_u1(const GpPosterior& gp, const EnvPoint& x, double lambda, double cde_est_at_x) {
  return utility_u1(gp.variance(x), lambda, cde_est_at_x);
}

double utility_u2(double alc_value, double lambda, double cde_est_at_x) {
  return mix_utility(std::log(std::max(alc_value, kAlcFloor)), lambda, cde_est_at_x);
}

Eigen::VectorXd alc_batch(const GpPosterior& gp, const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& reference,
                          const Eigen::VectorXd& candidate_var) {
  const Eigen::MatrixXd vref = gp.whiten(reference);
  Eigen::VectorXd out(candidates.rows());
  constexpr Eigen::Index chunk = 1024;
  const double r = static_cast<double>(reference.rows());
  for (Eigen::Index start = 0; start < candidates.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, candidates.rows() - start);
    const Eigen::MatrixXd block = candidates.middleRows(start, len);
    Eigen::MatrixXd cross = kernel_matrix(reference, block, gp.params());
    cross.noalias() -= vref.transpose() * gp.whiten(block);
    const Eigen::VectorXd num = cross.colwise().squaredNorm().transpose() / r;
    for (Eigen::Index j = 0; j < len; ++j) {
      const double denom = std::max(candidate_var[start + j] + KernelParams::alpha_ng, KernelParams::alpha_ng);
      out[start + j] = num[j] / denom;
    }
  }
  return out;
}

double alc(const GpPosterior& gp, const EnvPoint& x, const std::vector<EnvPoint>& reference) {
  if (reference.empty()) throw std::invalid_argument("ALC reference set is empty");
  Eigen::MatrixXd ref(static_cast<Eigen::Index>(reference.size()), x.size());
  for (std::size_t j = 0; j < reference.size(); ++j) ref.row(static_cast<Eigen::Index>(j)) = reference[j].transpose();
  Eigen::MatrixXd cand = x.transpose();
  Eigen::VectorXd var(1);
  var[0] = gp.variance(x);
  return alc_batch(gp, cand, ref, var)[0];
}

double utility_u2(const GpPosterior& gp, const EnvPoint& x, double lambda, double cde_est_at_x,
                  const std::vector<EnvPoint>& reference) {
  return utility_u2(alc(gp, x, reference), lambda, cde_est_at_x);
}

Eigen::MatrixXd reference_set(const EnvGrid& grid, std::size_t n_ref) {
  const std::size_t n = grid.size();
  if (n <= n_ref) return grid.centers();
  Eigen::MatrixXd ref(static_cast<Eigen::Index>(n_ref), static_cast<Eigen::Index>(grid.dim()));
  for (std::size_t i = 0; i < n_ref; ++i) {
    const std::size_t idx = i * n / n_ref;
    ref.row(static_cast<Eigen::Index>(i)) = grid.centers().row(static_cast<Eigen::Index>(idx));
  }
  return ref;
}

namespace {

Selection select_from(const GpPosterior& gp, const AgeConfig& config, const EnvGrid& grid, const Prediction& pred,
                      const std::vector<bool>& excluded) {
  const std::vector<double> cde = lognormal_mean(pred.mean, pred.var);
  Eigen::VectorXd alc_values;
  if (config.utility == UtilityKind::alc) {
    alc_values = alc_batch(gp, grid.centers(), reference_set(grid, config.n_ref), pred.var);
  }
  Selection best;
  best.utility = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const double u = config.utility == UtilityKind::alc ? utility_u2(alc_values[ii], config.lambda, cde[i])
                                                        : utility_u1(pred.var[ii], config.lambda, cde[i]);
    if (!found || u > best.utility) {
      found = true;
      best.cell = i;
      best.utility = u;
      best.alc_value = config.utility == UtilityKind::alc ? alc_values[ii] : 0.0;
    }
  }
  if (!found) throw std::runtime_error("no admissible candidate left on the candidate grid");
  best.point = config.candidate_grid.center(best.cell);
  return best;
}

}  // namespace

Selection select_next(const GpPosterior& gp, const AgeConfig& config, const std::vector<bool>& excluded) {
  const EnvGrid grid = config.gp_space_grid(config.candidate_grid);
  std::vector<bool> mask = excluded;
  if (mask.empty()) {
    mask.assign(grid.size(), false);
    for (std::size_t i = 0; i < grid.size(); ++i) mask[i] = gp.train().contains(grid.center(i));
  }
  return select_from(gp, config, grid, gp.predict(grid.centers()), mask);
}

nlohmann::json to_json(const AgeCheckpoint& cp) {
  nlohmann::json j;
  j["next_iter"] = cp.next_iter;
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < cp.train.size(); ++i) {
    const auto& p = cp.train.points()[i];
    pts.push_back({{"x", std::vector<double>(p.data(), p.data() + p.size())},
                   {"w", cp.train.targets()[i]},
                   {"multiplicity", cp.train.multiplicity()[i]}});
  }
  j["training_set"] = pts;
  std::vector<std::size_t> excluded;
  for (std::size_t i = 0; i < cp.excluded.size(); ++i) {
    if (cp.excluded[i]) excluded.push_back(i);
  }
  j["excluded_cells"] = excluded;
  j["n_cells"] = cp.excluded.size();
  j["kernel_params"] = cp.params;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : cp.trace) {
    trace.push_back({{"iter", r.iter},
                     {"utility", r.utility},
                     {"p_hat", r.p_hat},
                     {"delta", r.delta},
                     {"evals", r.evals},
                     {"kernel_params", r.params},
                     {"mle_warning", r.mle_warning}});
  }
  j["trace"] = trace;
  j["rng_state"] = cp.rng_state;
  j["units"] = cp.units;
  j["draws"] = cp.draws;
  return j;
}

AgeCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  AgeCheckpoint cp;
  cp.next_iter = j.at("next_iter").get<std::size_t>();
  for (const auto& p : j.at("training_set")) {
    const auto xs = p.at("x").get<std::vector<double>>();
    const EnvPoint x = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const int m = p.value("multiplicity", 1);
    for (int k = 0; k < m; ++k) cp.train.add(x, p.at("w").get<double>());
  }
  cp.excluded.assign(j.at("n_cells").get<std::size_t>(), false);
  for (auto i : j.at("excluded_cells").get<std::vector<std::size_t>>()) cp.excluded.at(i) = true;
  cp.params = j.at("kernel_params").get<KernelParams>();
  for (const auto& r : j.at("trace")) {
    AgeTraceRow row;
    row.iter = r.at("iter").get<std::size_t>();
    row.utility = r.at("utility").is_null() ? std::nan("") : r.at("utility").get<double>();
    row.p_hat = r.at("p_hat").get<double>();
    row.delta = r.at("delta").is_null() ? std::nan("") : r.at("delta").get<double>();
    row.evals = r.at("evals").get<std::uint64_t>();
    row.params = r.at("kernel_params").get<KernelParams>();
    row.mle_warning = r.at("mle_warning").get<bool>();
    cp.trace.push_back(row);
  }
  cp.rng_state = j.at("rng_state").get<std::string>();
  cp.units = j.at("units").get<std::uint64_t>();
  cp.draws = j.at("draws").get<std::uint64_t>();
  return cp;
}

namespace {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

double evaluate_target(Scenario& scenario, const FailureSpec& spec, const AgeConfig& config, const EnvPoint& x,
                       Rng& rng) {
  const double p = cond_fail_prob(scenario, x, config.n_rl_per_point, spec, rng, config.use_exact);
  return log_cde_target(p, scenario.env_density(x), config.n_rl_per_point, config.floor);
}

}  // namespace

AgeRunResult age_run(Scenario& scenario, const FailureSpec& spec, const AgeConfig& config, Rng& rng,
                     const std::optional<AgeCheckpoint>& resume, const CheckpointSink& sink) {
  config.validate();
  const EnvGrid& cand = config.candidate_grid;
  const bool shared_grid = !config.quadrature_grid.has_value();
  const EnvGrid gp_cand = config.gp_space_grid(cand);
  const std::optional<EnvGrid> gp_quad =
      shared_grid ? std::nullopt : std::optional<EnvGrid>(config.gp_space_grid(*config.quadrature_grid));
  const MleBounds bounds = MleBounds::for_diagonal(gp_cand.box().diagonal());

  AgeRunResult result;
  TrainingSet train;
  std::vector<bool> excluded(cand.size(), false);
  KernelParams params = config.init_params;
  std::size_t start_iter = 0;
  const std::uint64_t units0 = scenario.counter().units();
  const std::uint64_t draws0 = scenario.counter().draws();
  std::uint64_t units_offset = 0, draws_offset = 0;

  if (resume) {
    train = resume->train;
    excluded = resume->excluded;
    params = resume->params;
    start_iter = resume->next_iter;
    result.trace = resume->trace;
    std::istringstream is(resume->rng_state);
    is >> rng;
    units_offset = resume->units;
    draws_offset = resume->draws;
    if (excluded.size() != cand.size()) throw std::invalid_argument("checkpoint does not match the candidate grid");
  } else {
    for (const auto& x : latin_hypercube(cand.box(), config.n_init, rng, config.lhs_candidates)) {
      train.add(config.to_gp_space(x), evaluate_target(scenario, spec, config, x, rng));
    }
  }
  auto units_now = [&] { return units_offset + scenario.counter().units() - units0; };
  auto draws_now = [&] { return draws_offset + scenario.counter().draws() - draws0; };

  for (std::size_t it = start_iter; it <= config.n_iter; ++it) {
    const bool warm = it > 0;
    const MleResult fit = fit_mle(train, params, warm, bounds, rng);
    AgeTraceRow row;
    row.iter = it;
    row.mle_warning = fit.warning;
    std::optional<GpPosterior> gp;
    try {
      gp.emplace(train, fit.params);
      params = fit.params;
    } catch (const std::runtime_error& e) {
      warn(std::string("AGE: refit rejected, keeping previous kernel parameters: ") + e.what());
      row.mle_warning = true;
      gp.emplace(train, params);
    }
    result.mle_warning = result.mle_warning || row.mle_warning;
    row.params = params;

    const Prediction pred = gp->predict(gp_cand.centers());
    GpEstimate est = shared_grid ? failure_prob_from_prediction(pred, cand)
                                 : failure_prob_from_prediction(gp->predict(gp_quad->centers()), config.quad_grid());
    est.iteration = it;
    row.p_hat = est.p_hat;
    row.delta = config.p_true ? gp_abs_error(est.p_hat, *config.p_true) : std::nan("");
    row.evals = units_now();

    if (it == config.n_iter) {
      row.utility = std::nan("");
      result.trace.push_back(row);
      result.final_estimate = std::move(est);
      break;
    }
    const Selection sel = select_from(*gp, config, gp_cand, pred, excluded);
    row.utility = sel.utility;
    result.trace.push_back(row);
    train.add(config.to_gp_space(sel.point), evaluate_target(scenario, spec, config, sel.point, rng));
    excluded[sel.cell] = true;

    if (sink) {
      AgeCheckpoint cp;
      cp.next_iter = it + 1;
      cp.train = train;
      cp.excluded = excluded;
      cp.params = params;
      cp.trace = result.trace;
      cp.rng_state = rng_state(rng);
      cp.units = units_now();
      cp.draws = draws_now();
      sink(cp);
    }
  }
  result.train = std::move(train);
  result.final_params = params;
  result.units = units_now();
  result.draws = draws_now();
  return result;
}

}  // namespace failprob
