#include "failprob/bench.hpp"
#include "failprob/log.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace failprob;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;

void save(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void print_table(const ResultTable& t, const RunConfig& c) {
  std::printf("method=%s n_rep=%zu failures=%zu p_true=%.6e rmse=%.6e bias=%.6e budget=%llu\n",
              to_string(c.method).c_str(), t.rows.size(), t.failures, t.p_true, t.rmse, t.bias,
              static_cast<unsigned long long>(expected_budget(c)));
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool resume = false;
};

RunConfig resolve(const Common& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  c.validate();
  return c;
}

void print_world(const Prepared& prep) {
  if (!prep.world) return;
  const auto& w = *prep.world;
  std::printf("monopile: storms/yr=%.4g r_cr=%.6g p_grid=%.6e p_identity=%.6e cde_mode=(%.4g, %.4g) hs_q99=%.4g\n",
              w.storms_per_year, w.r_cr, w.p_brute, w.p_identity, w.cde_mode[0], w.cde_mode[1], w.hs_q99);
}

int cmd_run(const Common& o) {
  const RunConfig c = resolve(o);
  const Prepared prep = prepare(c);
  print_world(prep);
  const ResultTable t = run(c, prep, RunOptions{o.resume, true, {}});
  print_table(t, c);
  std::printf("output: %s\n", output_dir(c).string().c_str());
  return t.failures ? kPartial : kOk;
}

int cmd_sweep(const Common& o, std::optional<std::size_t> n_weights) {
  RunConfig c = resolve(o);
  c.method = Method::age;
  const std::vector<double> weights = n_weights ? evenly_spaced_weights(*n_weights) : c.lambda_weights;
  const Prepared prep = prepare(c);
  print_world(prep);
  const SweepResult s = sweep_lambda(c, prep, weights, RunOptions{o.resume, true, {}});
  std::size_t failures = 0;
  for (std::size_t i = 0; i < s.weights.size(); ++i) {
    failures += s.tables[i].failures;
    std::printf("lambda=%.4f median_final_error=%.6e rmse=%.6e\n", s.weights[i], s.final_error[i].median,
                s.tables[i].rmse);
  }
  std::printf("output: %s\n", output_dir(c).string().c_str());
  return failures ? kPartial : kOk;
}

int cmd_thresholds(const std::string& hindcast, double h_st, double merge_hours, const std::string& out) {
  const auto rows = read_hindcast_csv(hindcast);
  const StormPeakSet peaks = isolate_storm_peaks(rows, h_st, merge_hours);
  std::printf("rows=%zu peaks=%zu years=%.3f storms_per_year=%.4f\n", rows.size(), peaks.peaks.size(), peaks.years,
              peaks.storms_per_year());
  std::vector<double> levels;
  for (int k = 50; k <= 95; k += 5) levels.push_back(k / 100.0);
  const auto table = threshold_stability(peaks, levels);

  const fs::path dir = [&] {
    if (const char* env = std::getenv("FAILPROB_OUT"); env && *env) return fs::path(env);
    return fs::path(out);
  }();
  std::ostringstream csv;
  csv << "variable,level,threshold,sigma,xi,se_xi,modified_scale,n_exceed\n";
  char buf[256];
  for (const auto& r : table) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.10g,%.10g,%.10g,%.10g,%.10g,%zu\n", r.variable.c_str(), r.level,
                  r.threshold, r.sigma, r.xi, r.se_xi, r.modified_scale, r.n_exceed);
    csv << buf;
  }
  save(dir / "thresholds.csv", csv.str());
  std::ostringstream pk;
  pk << "row,hours,hs,se\n";
  for (const auto& p : peaks.peaks) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", p.row, p.hours, p.hs, p.se);
    pk << buf;
  }
  save(dir / "peaks.csv", pk.str());
  save(dir / "thresholds.gp", R"(set datafile separator ','
set terminal pngcairo size 900,900
set output 'thresholds.png'
set multiplot layout 2,2
set xlabel 'threshold level'
set ylabel 'shape'
plot 'thresholds.csv' using ($1 eq "hs" ? $2 : NaN):5:6 with yerrorbars title 'hs'
plot 'thresholds.csv' using ($1 eq "se" ? $2 : NaN):5:6 with yerrorbars title 'se'
set ylabel 'modified scale'
plot 'thresholds.csv' using ($1 eq "hs" ? $2 : NaN):7 with linespoints title 'hs'
plot 'thresholds.csv' using ($1 eq "se" ? $2 : NaN):7 with linespoints title 'se'
unset multiplot
)");
  for (const auto& r : table)
    std::printf("%s level=%.2f u=%.5g xi=%.4f (se %.4f) modified_scale=%.5g\n", r.variable.c_str(), r.level,
                r.threshold, r.xi, r.se_xi, r.modified_scale);
  std::printf("output: %s\n", dir.string().c_str());
  return kOk;
}

int cmd_bandwidth(const Common& o, std::vector<double> scales) {
  const RunConfig c = resolve(o);
  if (scales.empty()) scales = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0};
  const Prepared prep = prepare(c);
  print_world(prep);
  const auto rows = kde_bandwidth_sweep(c, prep, scales);
  std::ostringstream csv;
  csv << "scale,rmse,bias,mean_ess,failures\n";
  char buf[160];
  std::size_t failures = 0;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.10g,%.10g,%.10g,%zu\n", r.scale, r.rmse, r.bias, r.mean_ess, r.failures);
    csv << buf;
    failures += r.failures;
    std::printf("scale=%.3f rmse=%.4e bias=%.4e mean_ess=%.2f\n", r.scale, r.rmse, r.bias, r.mean_ess);
  }
  const fs::path dir = output_dir(c);
  save(dir / "kde_bandwidth.csv", csv.str());
  save(dir / "kde_bandwidth.gp", R"(set datafile separator ','
set terminal pngcairo size 900,600
set output 'kde_bandwidth.png'
set xlabel 'bandwidth multiplier'
set ylabel 'RMSE'
plot 'kde_bandwidth.csv' using 1:2 with linespoints title 'rmse'
)");
  std::printf("output: %s\n", dir.string().c_str());
  return failures ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure-probability estimation by IS-PT and AGE"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  Common run_opts;
  auto* run_cmd = app.add_subcommand("run", "Run replicates of the configured method");
  run_cmd->add_option("--config", run_opts.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run_opts.seed, "Master seed override");
  run_cmd->add_option("--workers", run_opts.workers, "Parallel replicates")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--resume", run_opts.resume, "Skip replicates already on disk");

  Common sweep_opts;
  std::optional<std::size_t> n_weights;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "AGE over a range of exploration weights");
  sweep_cmd->add_option("--config", sweep_opts.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--weights", n_weights, "Number of evenly spaced weights in [0, 1]")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep_opts.seed, "Master seed override");
  sweep_cmd->add_option("--workers", sweep_opts.workers, "Parallel replicates")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--resume", sweep_opts.resume, "Skip replicates already on disk");

  auto* diag_cmd = app.add_subcommand("diag", "Diagnostics");
  diag_cmd->require_subcommand(1);
  std::string hindcast, diag_out = "out/diag";
  double h_st = 4.0, merge_hours = 48.0;
  auto* thr_cmd = diag_cmd->add_subcommand("thresholds", "Storm peaks and GPD threshold stability");
  thr_cmd->add_option("--hindcast", hindcast, "Hindcast CSV (timestamp,hs,tp,te,tm)")
      ->required()
      ->check(CLI::ExistingFile);
  thr_cmd->add_option("--h-st", h_st, "Storm threshold on hs");
  thr_cmd->add_option("--merge-hours", merge_hours, "Merge window between storm peaks");
  thr_cmd->add_option("--out", diag_out, "Output directory");

  Common bw_opts;
  std::vector<double> scales;
  auto* bw_cmd = diag_cmd->add_subcommand("kde-bandwidth", "IS-PT error against the KDE bandwidth multiplier");
  bw_cmd->add_option("--config", bw_opts.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  bw_cmd->add_option("--scales", scales, "Bandwidth multipliers");
  bw_cmd->add_option("--seed", bw_opts.seed, "Master seed override");
  bw_cmd->add_option("--workers", bw_opts.workers, "Parallel replicates")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  set_quiet(quiet);

  try {
    if (*run_cmd) return cmd_run(run_opts);
    if (*sweep_cmd) return cmd_sweep(sweep_opts, n_weights);
    if (*thr_cmd) return cmd_thresholds(hindcast, h_st, merge_hours, diag_out);
    if (*bw_cmd) return cmd_bandwidth(bw_opts, scales);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  return kConfigError;
}
