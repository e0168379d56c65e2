#pragma once

#include "failprob/acquisition.hpp"
#include "failprob/extremes.hpp"
#include "failprob/ispt.hpp"
#include "failprob/monopile.hpp"
#include "failprob/synthetic.hpp"
#include "failprob/waves.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>

namespace failprob {

inline constexpr int kSchemaVersion = 1;

struct ConfigError final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method { brute, ispt, age };
enum class ScenarioKind { synthetic, monopile };

std::string to_string(Method m);

struct BruteConfig final {
  std::vector<std::size_t> counts{300, 300};
  std::size_t n_rl = 1000;
};

struct PeakSource final {
  enum class Kind { synthetic, hindcast };
  Kind kind = Kind::synthetic;
  std::string hindcast;
  double h_st = 4.0;
  double merge_hours = 48.0;
  SyntheticPeakParams synthetic;
  std::uint64_t seed = 1;
};

struct MonopileSetup final {
  PeakSource peaks;
  EnvModelConfig env{0.7, 0.6, 0.4, 100000, EnvGrid{Box({{3.0, 12.0}, {0.01, 0.05}}), {30, 15}}};
  WaveConfig waves;
  std::size_t n_rl = 100;
  std::uint64_t response_seed = 2;
  double return_period = 50.0;
  std::optional<double> storms_per_year;
  std::string response_cache;  // CSV path reused when present
};

struct MonopileWorld final {
  std::shared_ptr<const ResponseGrid> responses;
  std::shared_ptr<const GriddedDensity> density;
  nlohmann::json environment;
  double storms_per_year = 0.0;
  double r_cr = 0.0;
  double p_brute = 0.0;
  double p_identity = 0.0;
  double hs_q99 = 0.0;
  EnvPoint cde_mode;
};

MonopileWorld build_monopile(const MonopileSetup& setup, std::size_t workers = 1);

struct RunConfig final {
  int schema_version = kSchemaVersion;
  ScenarioKind scenario = ScenarioKind::synthetic;
  SyntheticParams synthetic;
  MonopileSetup monopile;
  Method method = Method::ispt;
  BruteConfig brute;
  IsptConfig ispt;
  AgeConfig age;
  std::size_t n_rep = 20;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::size_t workers = 1;
  std::optional<double> p_true;
  std::vector<double> lambda_weights{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99};

  void validate() const;
};

// Throws ConfigError on unknown keys, bad values or a schema mismatch.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

double rmse(const std::vector<double>& estimates, double p_true);
double bias(const std::vector<double>& estimates, double p_true);
// Population variance (denominator n), so that rmse^2 = bias^2 + variance.
double spread_variance(const std::vector<double>& estimates);
// Linear-interpolation sample quantile.
double quantile(std::vector<double> values, double q);

std::uint64_t expected_budget(const RunConfig& c);

struct Prepared final {
  std::unique_ptr<Scenario> prototype;
  FailureSpec spec;
  double p_true = 0.0;
  std::optional<MonopileWorld> world;
};

Prepared prepare(const RunConfig& c);

struct ReplicateResult final {
  std::size_t replicate = 0;
  Method method = Method::ispt;
  double lambda = 0.0;
  double p_hat = 0.0;
  double ess = 0.0;
  std::uint64_t evals = 0;
  std::uint64_t draws = 0;
  double seconds = 0.0;
  bool ok = true;
  std::string error;
  std::vector<AgeTraceRow> trace;
};

nlohmann::json to_json(const ReplicateResult& r);
ReplicateResult replicate_from_json(const nlohmann::json& j);

ReplicateResult run_replicate(const RunConfig& c, const Prepared& prep, std::size_t replicate);

struct ResultTable final {
  std::vector<ReplicateResult> rows;  // sorted by replicate
  double p_true = 0.0;
  double rmse = 0.0;
  double bias = 0.0;
  std::size_t failures = 0;

  std::vector<double> estimates() const;
};

struct RunOptions final {
  bool resume = false;
  bool write = true;
  std::filesystem::path dir;  // empty: output_dir(config)
};

// Executes every replicate; with write, emits results, traces, summary and plot scripts under c.out_dir.
ResultTable run(const RunConfig& c, const Prepared& prep, const RunOptions& opts = {});

void write_results_csv(std::ostream& os, const ResultTable& t);
void write_trace_csv(std::ostream& os, const std::vector<ReplicateResult>& rows);

struct Band final {
  double lambda = 0.0;
  double median = 0.0;
  std::array<double, 4> lo{};  // 50, 70, 90, 95 % bands
  std::array<double, 4> hi{};
};

Band quantile_band(double lambda, const std::vector<double>& values);

struct SweepResult final {
  std::vector<double> weights;
  std::vector<ResultTable> tables;
  std::vector<Band> final_error;  // one row per weight
};

std::vector<double> evenly_spaced_weights(std::size_t n);
SweepResult sweep_lambda(const RunConfig& c, const Prepared& prep, const std::vector<double>& weights,
                         const RunOptions& opts = {});
void write_bands(std::ostream& os, const std::vector<Band>& bands);

struct ThresholdRow final {
  std::string variable;
  double level = 0.0;
  double threshold = 0.0;
  double sigma = 0.0;
  double xi = 0.0;
  double se_xi = 0.0;
  double modified_scale = 0.0;
  std::size_t n_exceed = 0;
};

std::vector<ThresholdRow> threshold_stability(const StormPeakSet& peaks, const std::vector<double>& levels);

struct BandwidthRow final {
  double scale = 0.0;
  double rmse = 0.0;
  double bias = 0.0;
  double mean_ess = 0.0;
  std::size_t failures = 0;
};

std::vector<BandwidthRow> kde_bandwidth_sweep(const RunConfig& c, const Prepared& prep,
                                              const std::vector<double>& scales);

std::filesystem::path output_dir(const RunConfig& c);

}  // namespace failprob
