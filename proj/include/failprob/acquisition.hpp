#pragma once

#include "failprob/gp.hpp"
#include "failprob/quadrature.hpp"

#include <functional>
#include <optional>

namespace failprob {

enum class UtilityKind { variance, alc };
// unit_box: the GP sees coordinates mapped affinely from the candidate box onto [0,1]^d.
enum class InputScaling { none, unit_box };

struct AgeConfig final {
  double lambda = 0.8;
  UtilityKind utility = UtilityKind::variance;
  std::size_t n_init = 144;
  std::size_t n_iter = 100;
  std::size_t n_rl_per_point = 1000;
  bool use_exact = false;
  EnvGrid candidate_grid{Box({{0.0, 30.0}, {0.0, 30.0}}), {100, 100}};
  std::optional<EnvGrid> quadrature_grid;  // defaults to the candidate grid
  std::size_t n_ref = 400;
  std::size_t lhs_candidates = 20;
  TargetFloor floor;
  InputScaling input_scaling = InputScaling::none;
  KernelParams init_params{1.0, 3.0, 1.0, 1e-2};
  std::optional<double> p_true;

  void validate() const;
  const EnvGrid& quad_grid() const { return quadrature_grid ? *quadrature_grid : candidate_grid; }
  EnvPoint to_gp_space(const EnvPoint& x) const;
  // Same counts as the given grid, box mapped into GP coordinates.
  EnvGrid gp_space_grid(const EnvGrid& g) const;
};

double mix_utility(double log_term, double lambda, double cde_est);
double utility_u1(const GpPosterior& gp, const EnvPoint& x, double lambda, double cde_est_at_x);
double utility_u1(double post_var, double lambda, double cde_est_at_x);

double alc(const GpPosterior& gp, const EnvPoint& x, const std::vector<EnvPoint>& reference);
// ALC for every row of candidates against the reference rows.
Eigen::VectorXd alc_batch(const GpPosterior& gp, const Eigen::MatrixXd& candidates, const Eigen::MatrixXd& reference,
                          const Eigen::VectorXd& candidate_var);
double utility_u2(const GpPosterior& gp, const EnvPoint& x, double lambda, double cde_est_at_x,
                  const std::vector<EnvPoint>& reference);
double utility_u2(double alc_value, double lambda, double cde_est_at_x);

// Evenly strided subsample of the grid centers, at most n_ref rows.
Eigen::MatrixXd reference_set(const EnvGrid& grid, std::size_t n_ref);

struct Selection final {
  std::size_t cell = 0;
  EnvPoint point;
  double utility = 0.0;
  double alc_value = 0.0;
};

// Exhaustive argmax of the configured utility over candidate centers.
Selection select_next(const GpPosterior& gp, const AgeConfig& config, const std::vector<bool>& excluded = {});

struct AgeTraceRow final {
  std::size_t iter = 0;
  double utility = 0.0;
  double p_hat = 0.0;
  double delta = 0.0;
  std::uint64_t evals = 0;
  KernelParams params;
  bool mle_warning = false;
};

struct AgeCheckpoint final {
  std::size_t next_iter = 0;
  TrainingSet train;
  std::vector<bool> excluded;
  KernelParams params;
  std::vector<AgeTraceRow> trace;
  std::string rng_state;
  std::uint64_t units = 0;
  std::uint64_t draws = 0;
};

nlohmann::json to_json(const AgeCheckpoint& cp);
AgeCheckpoint checkpoint_from_json(const nlohmann::json& j);

struct AgeRunResult final {
  std::vector<AgeTraceRow> trace;
  TrainingSet train;
  KernelParams final_params;
  GpEstimate final_estimate;
  std::uint64_t units = 0;
  std::uint64_t draws = 0;
  bool mle_warning = false;
};

using CheckpointSink = std::function<void(const AgeCheckpoint&)>;

AgeRunResult age_run(Scenario& scenario, const FailureSpec& spec, const AgeConfig& config, Rng& rng,
                     const std::optional<AgeCheckpoint>& resume = std::nullopt, const CheckpointSink& sink = {});

}  // namespace failprob
