#include "failprob/bench.hpp"

#include "failprob/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace failprob {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// Reads a number that may be null (kept as NaN).
void read_maybe(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out = kNaN;
    return;
  }
  read(j, key, out, where);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class E>
E parse_enum(const json& j, const char* key, E current, std::initializer_list<std::pair<const char*, E>> names,
             const std::string& where) {
  if (!j.contains(key)) return current;
  if (!j.at(key).is_string()) throw ConfigError(where + "." + key + " must be a string");
  const auto s = j.at(key).get<std::string>();
  for (const auto& [n, v] : names)
    if (s == n) return v;
  throw ConfigError(where + "." + key + ": unrecognized value '" + s + "'");
}

template <class E>
std::string enum_name(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (e == v) return n;
  return "?";
}

const std::initializer_list<std::pair<const char*, Method>> kMethods{
    {"brute", Method::brute}, {"ispt", Method::ispt}, {"age", Method::age}};
const std::initializer_list<std::pair<const char*, ScenarioKind>> kScenarios{{"synthetic", ScenarioKind::synthetic},
                                                                             {"monopile", ScenarioKind::monopile}};
const std::initializer_list<std::pair<const char*, SigmaVariant>> kSigma{{"verbatim", SigmaVariant::verbatim},
                                                                         {"product", SigmaVariant::product}};
const std::initializer_list<std::pair<const char*, NoisePer>> kNoise{{"draw", NoisePer::draw},
                                                                     {"replicate", NoisePer::replicate}};
const std::initializer_list<std::pair<const char*, InputScaling>> kScaling{{"none", InputScaling::none},
                                                                        {"unit_box", InputScaling::unit_box}};
const std::initializer_list<std::pair<const char*, UtilityKind>> kUtility{{"variance", UtilityKind::variance},
                                                                          {"alc", UtilityKind::alc}};
const std::initializer_list<std::pair<const char*, TransferVariant>> kTransfer{
    {"verbatim", TransferVariant::verbatim}, {"squared", TransferVariant::squared}};
const std::initializer_list<std::pair<const char*, TargetFloor::Kind>> kFloor{
    {"half_count", TargetFloor::Kind::half_count}, {"absolute", TargetFloor::Kind::absolute}};
const std::initializer_list<std::pair<const char*, PeakSource::Kind>> kPeaks{
    {"synthetic", PeakSource::Kind::synthetic}, {"hindcast", PeakSource::Kind::hindcast}};

json box_json(const Box& b) {
  json a = json::array();
  for (const auto& d : b.dims()) a.push_back({d.lo, d.hi});
  return a;
}

Box box_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a nonempty array of [lo, hi] pairs");
  std::vector<Interval> dims;
  for (const auto& d : j) {
    if (!d.is_array() || d.size() != 2) throw ConfigError(where + " entries must be [lo, hi]");
    const double lo = d[0].get<double>(), hi = d[1].get<double>();
    if (!(hi > lo)) throw ConfigError(where + " needs lo < hi");
    dims.push_back({lo, hi});
  }
  return Box(std::move(dims));
}

json grid_json(const EnvGrid& g) { return {{"box", box_json(g.box())}, {"counts", g.counts()}}; }

EnvGrid grid_from(const json& j, const EnvGrid& fallback, const std::string& where) {
  check_keys(j, {"box", "counts"}, where);
  Box box = j.contains("box") ? box_from(j.at("box"), where + ".box") : fallback.box();
  std::vector<std::size_t> counts = fallback.counts();
  read(j, "counts", counts, where);
  if (counts.size() != box.dim()) throw ConfigError(where + ": counts and box dimensions differ");
  for (auto n : counts)
    if (n == 0) throw ConfigError(where + ": counts must be positive");
  return EnvGrid(std::move(box), std::move(counts));
}

json point_json(const EnvPoint& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

EnvPoint point_from(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return Eigen::Map<EnvPoint>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json floor_json(const TargetFloor& f) {
  return {{"kind", enum_name(f.kind, kFloor)}, {"probability", f.probability}, {"cde", f.cde}};
}

TargetFloor floor_from(const json& j, TargetFloor f, const std::string& where) {
  check_keys(j, {"kind", "probability", "cde"}, where);
  f.kind = parse_enum(j, "kind", f.kind, kFloor, where);
  read(j, "probability", f.probability, where);
  read(j, "cde", f.cde, where);
  return f;
}

json synthetic_json(const SyntheticParams& p) {
  return {{"k", p.k},
          {"a", p.a},
          {"b", p.b},
          {"c", p.c},
          {"nu_peak", p.nu_peak},
          {"peak1", point_json(p.peak1)},
          {"peak2", point_json(p.peak2)},
          {"delta", p.delta},
          {"r_cr", p.r_cr},
          {"sigma_variant", enum_name(p.sigma_variant, kSigma)},
          {"noise_per", enum_name(p.noise_per, kNoise)},
          {"box", box_json(p.box)}};
}

SyntheticParams synthetic_from(const json& j, SyntheticParams p) {
  const std::string w = "synthetic";
  check_keys(j, {"k", "a", "b", "c", "nu_peak", "peak1", "peak2", "delta", "r_cr", "sigma_variant", "noise_per", "box"},
             w);
  read(j, "k", p.k, w);
  read(j, "a", p.a, w);
  read(j, "b", p.b, w);
  read(j, "c", p.c, w);
  read(j, "nu_peak", p.nu_peak, w);
  if (j.contains("peak1")) p.peak1 = point_from(j.at("peak1"), w + ".peak1");
  if (j.contains("peak2")) p.peak2 = point_from(j.at("peak2"), w + ".peak2");
  read(j, "delta", p.delta, w);
  read(j, "r_cr", p.r_cr, w);
  p.sigma_variant = parse_enum(j, "sigma_variant", p.sigma_variant, kSigma, w);
  p.noise_per = parse_enum(j, "noise_per", p.noise_per, kNoise, w);
  if (j.contains("box")) p.box = box_from(j.at("box"), w + ".box");
  return p;
}

json pt_json(const PtConfig& p) {
  return {{"n_chains", p.n_chains},   {"n_steps", p.n_steps},         {"t_min", p.t_min},
          {"t_max", p.t_max},         {"sigma_mh", p.sigma_mh},       {"swap_interval", p.swap_interval},
          {"adapt", p.adapt},         {"gain_t0", p.gain_t0},         {"target_accept", p.target_accept},
          {"freeze_fraction", p.freeze_fraction}};
}

PtConfig pt_from(const json& j, PtConfig p) {
  const std::string w = "ispt.pt";
  check_keys(j, {"n_chains", "n_steps", "t_min", "t_max", "sigma_mh", "swap_interval", "adapt", "gain_t0",
                 "target_accept", "freeze_fraction"},
             w);
  read(j, "n_chains", p.n_chains, w);
  read(j, "n_steps", p.n_steps, w);
  read(j, "t_min", p.t_min, w);
  read(j, "t_max", p.t_max, w);
  read(j, "sigma_mh", p.sigma_mh, w);
  read(j, "swap_interval", p.swap_interval, w);
  read(j, "adapt", p.adapt, w);
  read(j, "gain_t0", p.gain_t0, w);
  read(j, "target_accept", p.target_accept, w);
  read(j, "freeze_fraction", p.freeze_fraction, w);
  return p;
}

json ispt_json(const IsptConfig& c) {
  return {{"pt", pt_json(c.pt)},         {"n_is", c.n_is},           {"n_rl", c.n_rl},
          {"use_exact", c.use_exact},    {"floor", floor_json(c.floor)}, {"bandwidth_scale", c.bandwidth_scale}};
}

IsptConfig ispt_from(const json& j, IsptConfig c) {
  const std::string w = "ispt";
  check_keys(j, {"pt", "n_is", "n_rl", "use_exact", "floor", "bandwidth_scale"}, w);
  if (j.contains("pt")) c.pt = pt_from(j.at("pt"), c.pt);
  read(j, "n_is", c.n_is, w);
  read(j, "n_rl", c.n_rl, w);
  read(j, "use_exact", c.use_exact, w);
  if (j.contains("floor")) c.floor = floor_from(j.at("floor"), c.floor, w + ".floor");
  read(j, "bandwidth_scale", c.bandwidth_scale, w);
  return c;
}

json age_json(const AgeConfig& a) {
  json j{{"lambda", a.lambda},
         {"utility", enum_name(a.utility, kUtility)},
         {"n_init", a.n_init},
         {"n_iter", a.n_iter},
         {"n_rl_per_point", a.n_rl_per_point},
         {"use_exact", a.use_exact},
         {"candidate_grid", grid_json(a.candidate_grid)},
         {"quadrature_grid", a.quadrature_grid ? grid_json(*a.quadrature_grid) : json(nullptr)},
         {"n_ref", a.n_ref},
         {"lhs_candidates", a.lhs_candidates},
         {"floor", floor_json(a.floor)},
         {"input_scaling", enum_name(a.input_scaling, kScaling)},
         {"init_params", a.init_params},
         {"p_true", a.p_true ? json(*a.p_true) : json(nullptr)}};
  return j;
}

AgeConfig age_from(const json& j, AgeConfig a) {
  const std::string w = "age";
  check_keys(j, {"lambda", "utility", "n_init", "n_iter", "n_rl_per_point", "use_exact", "candidate_grid",
                 "quadrature_grid", "n_ref", "lhs_candidates", "floor", "input_scaling", "init_params", "p_true"},
             w);
  read(j, "lambda", a.lambda, w);
  a.utility = parse_enum(j, "utility", a.utility, kUtility, w);
  read(j, "n_init", a.n_init, w);
  read(j, "n_iter", a.n_iter, w);
  read(j, "n_rl_per_point", a.n_rl_per_point, w);
  read(j, "use_exact", a.use_exact, w);
  if (j.contains("candidate_grid")) a.candidate_grid = grid_from(j.at("candidate_grid"), a.candidate_grid, w + ".candidate_grid");
  if (j.contains("quadrature_grid")) {
    if (j.at("quadrature_grid").is_null())
      a.quadrature_grid.reset();
    else
      a.quadrature_grid = grid_from(j.at("quadrature_grid"), a.candidate_grid, w + ".quadrature_grid");
  }
  read(j, "n_ref", a.n_ref, w);
  read(j, "lhs_candidates", a.lhs_candidates, w);
  if (j.contains("floor")) a.floor = floor_from(j.at("floor"), a.floor, w + ".floor");
  a.input_scaling = parse_enum(j, "input_scaling", a.input_scaling, kScaling, w);
  if (j.contains("init_params")) {
    try {
      a.init_params = j.at("init_params").get<KernelParams>();
    } catch (const std::exception& e) {
      throw ConfigError(w + ".init_params: " + e.what());
    }
  }
  if (j.contains("p_true")) {
    if (j.at("p_true").is_null())
      a.p_true.reset();
    else
      a.p_true = j.at("p_true").get<double>();
  }
  return a;
}

json monopile_json(const MonopileSetup& m) {
  const auto& sp = m.peaks.synthetic;
  const auto& w = m.waves;
  return {{"peaks",
           {{"source", enum_name(m.peaks.kind, kPeaks)},
            {"hindcast", m.peaks.hindcast},
            {"h_st", m.peaks.h_st},
            {"merge_hours", m.peaks.merge_hours},
            {"seed", m.peaks.seed},
            {"synthetic",
             {{"n_peaks", sp.n_peaks},
              {"years", sp.years},
              {"hs_floor", sp.hs_floor},
              {"hs_sigma", sp.hs_sigma},
              {"hs_xi", sp.hs_xi},
              {"se_lo", sp.se_lo},
              {"se_hi", sp.se_hi},
              {"se_shape_a", sp.se_shape_a},
              {"se_shape_b", sp.se_shape_b},
              {"rho", sp.rho}}}}},
          {"env",
           {{"marginal_quantile", m.env.marginal_quantile},
            {"conditioning_quantile", m.env.conditioning_quantile},
            {"delta_ht", m.env.delta_ht},
            {"n_sm", m.env.n_sm},
            {"grid", grid_json(m.env.grid)}}},
          {"waves",
           {{"spectrum",
             {{"f_lo", w.spectrum.f_lo},
              {"f_hi", w.spectrum.f_hi},
              {"n_freq", w.spectrum.n_freq},
              {"peak_enhancement", w.spectrum.peak_enhancement},
              {"tail_exponent", w.spectrum.tail_exponent}}},
            {"transfer",
             {{"f0", w.transfer.f0},
              {"damping", number_or_null(w.transfer.damping)},
              {"variant", enum_name(w.transfer.variant, kTransfer)}}},
            {"surface", {{"dt", w.surface.dt}, {"duration", w.surface.duration}, {"depth", w.surface.depth}}}}},
          {"n_rl", m.n_rl},
          {"response_seed", m.response_seed},
          {"return_period", m.return_period},
          {"storms_per_year", m.storms_per_year ? json(*m.storms_per_year) : json(nullptr)},
          {"response_cache", m.response_cache}};
}

MonopileSetup monopile_from(const json& j, MonopileSetup m) {
  const std::string w = "monopile";
  check_keys(j, {"peaks", "env", "waves", "n_rl", "response_seed", "return_period", "storms_per_year",
                 "response_cache"},
             w);
  if (j.contains("peaks")) {
    const auto& p = j.at("peaks");
    const std::string wp = w + ".peaks";
    check_keys(p, {"source", "hindcast", "h_st", "merge_hours", "seed", "synthetic"}, wp);
    m.peaks.kind = parse_enum(p, "source", m.peaks.kind, kPeaks, wp);
    read(p, "hindcast", m.peaks.hindcast, wp);
    read(p, "h_st", m.peaks.h_st, wp);
    read(p, "merge_hours", m.peaks.merge_hours, wp);
    read(p, "seed", m.peaks.seed, wp);
    if (p.contains("synthetic")) {
      const auto& s = p.at("synthetic");
      const std::string ws = wp + ".synthetic";
      auto& sp = m.peaks.synthetic;
      check_keys(s, {"n_peaks", "years", "hs_floor", "hs_sigma", "hs_xi", "se_lo", "se_hi", "se_shape_a",
                     "se_shape_b", "rho"},
                 ws);
      read(s, "n_peaks", sp.n_peaks, ws);
      read(s, "years", sp.years, ws);
      read(s, "hs_floor", sp.hs_floor, ws);
      read(s, "hs_sigma", sp.hs_sigma, ws);
      read(s, "hs_xi", sp.hs_xi, ws);
      read(s, "se_lo", sp.se_lo, ws);
      read(s, "se_hi", sp.se_hi, ws);
      read(s, "se_shape_a", sp.se_shape_a, ws);
      read(s, "se_shape_b", sp.se_shape_b, ws);
      read(s, "rho", sp.rho, ws);
    }
  }
  if (j.contains("env")) {
    const auto& e = j.at("env");
    const std::string we = w + ".env";
    check_keys(e, {"marginal_quantile", "conditioning_quantile", "delta_ht", "n_sm", "grid"}, we);
    read(e, "marginal_quantile", m.env.marginal_quantile, we);
    read(e, "conditioning_quantile", m.env.conditioning_quantile, we);
    read(e, "delta_ht", m.env.delta_ht, we);
    read(e, "n_sm", m.env.n_sm, we);
    if (e.contains("grid")) m.env.grid = grid_from(e.at("grid"), m.env.grid, we + ".grid");
  }
  if (j.contains("waves")) {
    const auto& wv = j.at("waves");
    const std::string ww = w + ".waves";
    check_keys(wv, {"spectrum", "transfer", "surface"}, ww);
    if (wv.contains("spectrum")) {
      const auto& s = wv.at("spectrum");
      auto& sc = m.waves.spectrum;
      check_keys(s, {"f_lo", "f_hi", "n_freq", "peak_enhancement", "tail_exponent"}, ww + ".spectrum");
      read(s, "f_lo", sc.f_lo, ww);
      read(s, "f_hi", sc.f_hi, ww);
      read(s, "n_freq", sc.n_freq, ww);
      read(s, "peak_enhancement", sc.peak_enhancement, ww);
      read(s, "tail_exponent", sc.tail_exponent, ww);
    }
    if (wv.contains("transfer")) {
      const auto& t = wv.at("transfer");
      auto& tp = m.waves.transfer;
      check_keys(t, {"f0", "damping", "variant"}, ww + ".transfer");
      read(t, "f0", tp.f0, ww);
      read_maybe(t, "damping", tp.damping, ww);
      tp.variant = parse_enum(t, "variant", tp.variant, kTransfer, ww + ".transfer");
    }
    if (wv.contains("surface")) {
      const auto& s = wv.at("surface");
      auto& su = m.waves.surface;
      check_keys(s, {"dt", "duration", "depth"}, ww + ".surface");
      read(s, "dt", su.dt, ww);
      read(s, "duration", su.duration, ww);
      read(s, "depth", su.depth, ww);
    }
  }
  read(j, "n_rl", m.n_rl, w);
  read(j, "response_seed", m.response_seed, w);
  read(j, "return_period", m.return_period, w);
  if (j.contains("storms_per_year")) {
    if (j.at("storms_per_year").is_null())
      m.storms_per_year.reset();
    else
      m.storms_per_year = j.at("storms_per_year").get<double>();
  }
  read(j, "response_cache", m.response_cache, w);
  return m;
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, p);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rep_file(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%05zu.json", r);
  return buf;
}

}  // namespace

std::string to_string(Method m) { return enum_name(m, kMethods); }

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  if (n_rep < 1) throw ConfigError("n_rep must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (brute.counts.size() != 2) throw ConfigError("brute.counts must have two entries");
  for (auto n : brute.counts)
    if (n == 0) throw ConfigError("brute.counts must be positive");
  if (brute.n_rl < 1) throw ConfigError("brute.n_rl must be at least 1");
  for (double w : lambda_weights)
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("lambda_weights must lie in [0, 1]");
  if (p_true && !(*p_true >= 0.0)) throw ConfigError("p_true must be nonnegative");
  try {
    synthetic.validate();
    ispt.validate();
    age.validate();
    if (scenario == ScenarioKind::monopile) {
      monopile.env.validate();
      monopile.waves.spectrum.validate();
      monopile.waves.surface.validate();
      monopile.waves.transfer.validate();
      if (monopile.n_rl < 1) throw std::invalid_argument("monopile.n_rl must be at least 1");
      if (!(monopile.return_period > 1.0)) throw std::invalid_argument("monopile.return_period must exceed 1");
      if (monopile.peaks.kind == PeakSource::Kind::hindcast && monopile.peaks.hindcast.empty())
        throw std::invalid_argument("monopile.peaks.hindcast path is required for source 'hindcast'");
      const Box& env = monopile.env.grid.box();
      const Box& cand = age.candidate_grid.box();
      for (std::size_t k = 0; k < 2; ++k) {
        if (cand[k].lo < env[k].lo || cand[k].hi > env[k].hi)
          throw std::invalid_argument("age.candidate_grid must lie inside the monopile environment grid");
      }
    } else {
      if (age.candidate_grid.dim() != synthetic.box.dim())
        throw std::invalid_argument("age.candidate_grid dimension differs from the scenario");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  const std::string w = "config";
  check_keys(j, {"schema_version", "scenario", "synthetic", "monopile", "method", "brute", "ispt", "age", "n_rep",
                 "seed", "out_dir", "workers", "p_true", "lambda_weights"},
             w);
  if (!j.contains("schema_version")) throw ConfigError("config lacks schema_version");
  read(j, "schema_version", c.schema_version, w);
  c.scenario = parse_enum(j, "scenario", c.scenario, kScenarios, w);
  if (c.scenario == ScenarioKind::monopile) {
    // Monopile defaults: AGE on the environment grid with the smaller initial design.
    c.age.candidate_grid = c.monopile.env.grid;
    c.age.n_init = 100;
    c.age.n_rl_per_point = c.monopile.n_rl;
    c.ispt.n_rl = c.monopile.n_rl;
  }
  if (j.contains("synthetic")) c.synthetic = synthetic_from(j.at("synthetic"), c.synthetic);
  if (j.contains("monopile")) {
    c.monopile = monopile_from(j.at("monopile"), c.monopile);
    if (c.scenario == ScenarioKind::monopile) c.age.candidate_grid = c.monopile.env.grid;
  }
  c.method = parse_enum(j, "method", c.method, kMethods, w);
  if (j.contains("brute")) {
    const auto& b = j.at("brute");
    check_keys(b, {"counts", "n_rl"}, "brute");
    read(b, "counts", c.brute.counts, "brute");
    read(b, "n_rl", c.brute.n_rl, "brute");
  }
  if (j.contains("ispt")) c.ispt = ispt_from(j.at("ispt"), c.ispt);
  if (j.contains("age")) c.age = age_from(j.at("age"), c.age);
  read(j, "n_rep", c.n_rep, w);
  read(j, "seed", c.seed, w);
  read(j, "out_dir", c.out_dir, w);
  read(j, "workers", c.workers, w);
  if (j.contains("p_true") && !j.at("p_true").is_null()) c.p_true = j.at("p_true").get<double>();
  read(j, "lambda_weights", c.lambda_weights, w);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"schema_version", c.schema_version},
          {"scenario", enum_name(c.scenario, kScenarios)},
          {"synthetic", synthetic_json(c.synthetic)},
          {"monopile", monopile_json(c.monopile)},
          {"method", enum_name(c.method, kMethods)},
          {"brute", {{"counts", c.brute.counts}, {"n_rl", c.brute.n_rl}}},
          {"ispt", ispt_json(c.ispt)},
          {"age", age_json(c.age)},
          {"n_rep", c.n_rep},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"workers", c.workers},
          {"p_true", c.p_true ? json(*c.p_true) : json(nullptr)},
          {"lambda_weights", c.lambda_weights}};
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

double rmse(const std::vector<double>& est, double p_true) {
  if (est.empty()) throw std::invalid_argument("rmse of no estimates");
  double s = 0.0;
  for (double e : est) s += (e - p_true) * (e - p_true);
  return std::sqrt(s / static_cast<double>(est.size()));
}

double bias(const std::vector<double>& est, double p_true) {
  if (est.empty()) throw std::invalid_argument("bias of no estimates");
  double s = 0.0;
  for (double e : est) s += e - p_true;
  return s / static_cast<double>(est.size());
}

double spread_variance(const std::vector<double>& est) {
  if (est.empty()) throw std::invalid_argument("variance of no estimates");
  double mean = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(est.size());
  double s = 0.0;
  for (double e : est) s += (e - mean) * (e - mean);
  return s / static_cast<double>(est.size());
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (pos - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

std::uint64_t expected_budget(const RunConfig& c) {
  switch (c.method) {
    case Method::brute: return c.brute.counts[0] * c.brute.counts[1];
    case Method::ispt: return c.ispt.pt.n_chains * c.ispt.pt.n_steps + c.ispt.n_is;
    case Method::age: return c.age.n_init + c.age.n_iter;
  }
  return 0;
}

MonopileWorld build_monopile(const MonopileSetup& setup, std::size_t workers) {
  StormPeakSet peaks;
  if (setup.peaks.kind == PeakSource::Kind::synthetic) {
    Rng rng = make_stream(setup.peaks.seed, 0);
    peaks = synthetic_storm_peaks(setup.peaks.synthetic, rng);
  } else {
    peaks = isolate_storm_peaks(read_hindcast_csv(setup.peaks.hindcast), setup.peaks.h_st, setup.peaks.merge_hours);
  }
  Rng env_rng = make_stream(setup.peaks.seed, 1);
  EnvironmentModel model = build_environment_model(peaks, setup.env, env_rng);

  MonopileWorld w;
  w.storms_per_year = setup.storms_per_year ? *setup.storms_per_year : model.storms_per_year;
  std::shared_ptr<ResponseGrid> rg;
  if (!setup.response_cache.empty() && fs::exists(setup.response_cache)) {
    std::ifstream is(setup.response_cache);
    rg = std::make_shared<ResponseGrid>(read_response_grid_csv(is, setup.env.grid));
    if (rg->n_rl != setup.n_rl) throw std::runtime_error("cached response grid has a different n_rl");
  } else {
    rg = std::make_shared<ResponseGrid>(response_grid(setup.env.grid, setup.waves, setup.n_rl, setup.response_seed,
                                                      workers));
    if (!setup.response_cache.empty()) {
      std::ostringstream os;
      write_response_grid_csv(os, *rg);
      write_text(setup.response_cache, os.str());
    }
  }
  auto dens = std::make_shared<GriddedDensity>(std::move(model.density));
  w.r_cr = critical_response_50yr(*rg, *dens, w.storms_per_year, setup.return_period);
  w.p_brute = single_storm_failure_prob(*rg, *dens, w.r_cr);
  w.p_identity = construction_failure_prob(w.storms_per_year, setup.return_period);
  std::vector<double> hs;
  for (const auto& p : peaks.peaks) hs.push_back(p.hs);
  w.hs_q99 = quantile(hs, 0.99);
  const GriddedField cde = monopile_cde(*rg, *dens, w.r_cr);
  const auto mode = static_cast<std::size_t>(std::max_element(cde.values.begin(), cde.values.end()) - cde.values.begin());
  w.cde_mode = dens->grid.center(mode);

  model.density = *dens;
  w.environment = environment_sidecar(model);
  w.environment["n_peaks"] = peaks.peaks.size();
  w.environment["r_cr"] = w.r_cr;
  w.environment["p_brute"] = w.p_brute;
  w.environment["p_identity"] = w.p_identity;
  w.environment["hs_q99"] = w.hs_q99;
  w.environment["cde_mode"] = point_json(w.cde_mode);
  w.environment["storms_per_year_used"] = w.storms_per_year;
  w.responses = std::move(rg);
  w.density = std::move(dens);
  return w;
}

Prepared prepare(const RunConfig& c) {
  c.validate();
  Prepared p;
  if (c.scenario == ScenarioKind::synthetic) {
    p.prototype = std::make_unique<SyntheticScenario>(c.synthetic);
    p.spec.r_cr = c.synthetic.r_cr;
    if (c.p_true) {
      p.p_true = *c.p_true;
    } else {
      const EnvGrid grid(c.synthetic.box, c.brute.counts);
      double s = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const EnvPoint x = grid.center(i);
        s += *p.prototype->exact_cond_fail_prob(x, p.spec.r_cr) * p.prototype->env_density(x);
      }
      p.p_true = s * grid.cell_area();
    }
  } else {
    p.world = build_monopile(c.monopile, c.workers);
    p.prototype = std::make_unique<MonopileScenario>(p.world->responses, p.world->density);
    p.spec.r_cr = p.world->r_cr;
    p.p_true = c.p_true ? *c.p_true : p.world->p_brute;
  }
  return p;
}

json to_json(const ReplicateResult& r) {
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({{"iter", t.iter},
                     {"utility", number_or_null(t.utility)},
                     {"p_hat", t.p_hat},
                     {"delta", number_or_null(t.delta)},
                     {"evals", t.evals},
                     {"params", t.params},
                     {"mle_warning", t.mle_warning}});
  }
  return {{"replicate", r.replicate}, {"method", to_string(r.method)}, {"lambda", r.lambda},
          {"p_hat", number_or_null(r.p_hat)}, {"ess", number_or_null(r.ess)}, {"evals", r.evals},
          {"draws", r.draws}, {"seconds", r.seconds}, {"ok", r.ok}, {"error", r.error}, {"trace", trace}};
}

ReplicateResult replicate_from_json(const json& j) {
  auto num = [](const json& v) { return v.is_null() ? kNaN : v.get<double>(); };
  ReplicateResult r;
  r.replicate = j.at("replicate").get<std::size_t>();
  r.method = parse_enum(j, "method", Method::ispt, kMethods, "replicate");
  r.lambda = j.at("lambda").get<double>();
  r.p_hat = num(j.at("p_hat"));
  r.ess = num(j.at("ess"));
  r.evals = j.at("evals").get<std::uint64_t>();
  r.draws = j.at("draws").get<std::uint64_t>();
  r.seconds = j.at("seconds").get<double>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.at("error").get<std::string>();
  for (const auto& t : j.at("trace")) {
    AgeTraceRow row;
    row.iter = t.at("iter").get<std::size_t>();
    row.utility = num(t.at("utility"));
    row.p_hat = t.at("p_hat").get<double>();
    row.delta = num(t.at("delta"));
    row.evals = t.at("evals").get<std::uint64_t>();
    row.params = t.at("params").get<KernelParams>();
    row.mle_warning = t.at("mle_warning").get<bool>();
    r.trace.push_back(row);
  }
  return r;
}

ReplicateResult run_replicate(const RunConfig& c, const Prepared& prep, std::size_t replicate) {
  ReplicateResult out;
  out.replicate = replicate;
  out.method = c.method;
  out.lambda = c.age.lambda;
  out.ess = kNaN;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Rng rng = make_stream(c.seed, replicate);
    auto sc = prep.prototype->clone();
    sc->counter().reset();
    if (auto* syn = dynamic_cast<SyntheticScenario*>(sc.get()); syn && syn->params().noise_per == NoisePer::replicate)
      syn->begin_replicate(rng);
    switch (c.method) {
      case Method::brute: {
        const EnvGrid grid(sc->support(), c.brute.counts);
        const GriddedField f = cde_brute_force(*sc, grid, c.brute.n_rl, prep.spec, rng);
        out.p_hat = failure_prob_quadrature(f, grid);
        break;
      }
      case Method::ispt: {
        const IsptResult res = ispt_run(*sc, prep.spec, c.ispt, rng);
        out.p_hat = res.estimate.p_hat;
        out.ess = res.estimate.ess;
        break;
      }
      case Method::age: {
        AgeConfig a = c.age;
        if (!a.p_true) a.p_true = prep.p_true;
        AgeRunResult res = age_run(*sc, prep.spec, a, rng);
        out.p_hat = res.final_estimate.p_hat;
        out.trace = std::move(res.trace);
        break;
      }
    }
    out.evals = sc->counter().units();
    out.draws = sc->counter().draws();
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.p_hat = kNaN;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<double> ResultTable::estimates() const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.ok) v.push_back(r.p_hat);
  return v;
}

fs::path output_dir(const RunConfig& c) {
  if (const char* env = std::getenv("FAILPROB_OUT"); env && *env) return fs::path(env);
  return fs::path(c.out_dir);
}

void write_results_csv(std::ostream& os, const ResultTable& t) {
  os << "replicate,method,p_hat,ess,evals\n";
  for (const auto& r : t.rows)
    os << r.replicate << ',' << to_string(r.method) << ',' << fmt(r.p_hat) << ',' << fmt(r.ess) << ',' << r.evals
       << '\n';
}

void write_trace_csv(std::ostream& os, const std::vector<ReplicateResult>& rows) {
  os << "replicate,iter,lambda,utility,p_hat,delta,evals\n";
  for (const auto& r : rows)
    for (const auto& t : r.trace)
      os << r.replicate << ',' << t.iter << ',' << fmt(r.lambda) << ',' << fmt(t.utility) << ',' << fmt(t.p_hat)
         << ',' << fmt(t.delta) << ',' << t.evals << '\n';
}

namespace {

const char* kResultsPlot = R"(set datafile separator ','
set key autotitle columnhead
set xlabel 'replicate'
set ylabel 'estimate'
set terminal pngcairo size 900,600
set output 'results.png'
ptrue = real(system("sed -n 's/.*\"p_true\": *\\([^,}]*\\).*/\\1/p' summary.json | head -1"))
plot 'results.csv' using 1:3 with points pt 7 title 'p_hat', ptrue with lines dt 2 title 'truth'
)";

const char* kTracePlot = R"(set datafile separator ','
set xlabel 'iteration'
set ylabel 'absolute error'
set logscale y
set terminal pngcairo size 900,600
set output 'traces.png'
plot 'traces.csv' every ::1 using 2:6 with points pt 7 ps 0.4 notitle
)";

const char* kBandPlot = R"(set xlabel 'lambda'
set ylabel 'final absolute error'
set logscale y
set terminal pngcairo size 900,600
set output 'lambda_bands.png'
plot 'lambda_bands.dat' using 1:9:10 with filledcurves lc rgb '#dbe9f6' title '95%', \
     '' using 1:7:8 with filledcurves lc rgb '#9ecae1' title '90%', \
     '' using 1:5:6 with filledcurves lc rgb '#6baed6' title '70%', \
     '' using 1:3:4 with filledcurves lc rgb '#3182bd' title '50%', \
     '' using 1:2 with linespoints lc rgb 'black' title 'median'
)";

const char* kIterBandPlot = R"(set xlabel 'iteration'
set ylabel 'absolute error'
set logscale y
set terminal pngcairo size 900,600
set output 'lambda_iter_bands.png'
# one block per weight; column 1 is lambda
plot for [i=0:*] 'lambda_iter_bands.dat' index i using 2:3 with lines title columnhead(1)
)";

}  // namespace

ResultTable run(const RunConfig& c, const Prepared& prep, const RunOptions& opts) {
  c.validate();
  const fs::path dir = opts.dir.empty() ? output_dir(c) : opts.dir;
  const fs::path rep_dir = dir / "replicates";
  const json resolved = to_json(c);
  if (opts.write) {
    fs::create_directories(rep_dir);
    const fs::path cfg = dir / "resolved_config.json";
    if (opts.resume && fs::exists(cfg)) {
      std::ifstream is(cfg);
      if (json::parse(is) != resolved) throw ConfigError("cannot resume: configuration differs from " + cfg.string());
    }
    write_text(cfg, resolved.dump(2) + "\n");
  }

  std::vector<std::optional<ReplicateResult>> slots(c.n_rep);
  if (opts.write && opts.resume) {
    for (std::size_t r = 0; r < c.n_rep; ++r) {
      const fs::path f = rep_dir / rep_file(r);
      if (!fs::exists(f)) continue;
      std::ifstream is(f);
      slots[r] = replicate_from_json(json::parse(is));
    }
  }
  std::vector<std::size_t> pending;
  for (std::size_t r = 0; r < c.n_rep; ++r)
    if (!slots[r]) pending.push_back(r);

  std::atomic<std::size_t> next{0};
  std::mutex sink;
  auto work = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      ReplicateResult res = run_replicate(c, prep, pending[k]);
      std::lock_guard lock(sink);
      if (!res.ok) warn("replicate " + std::to_string(res.replicate) + " failed: " + res.error);
      if (opts.write) write_text(rep_dir / rep_file(res.replicate), to_json(res).dump() + "\n");
      slots[res.replicate] = std::move(res);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(c.workers, pending.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }

  ResultTable table;
  table.p_true = prep.p_true;
  for (auto& s : slots) {
    if (!s->ok) ++table.failures;
    table.rows.push_back(std::move(*s));
  }
  const auto est = table.estimates();
  table.rmse = est.empty() ? kNaN : rmse(est, prep.p_true);
  table.bias = est.empty() ? kNaN : bias(est, prep.p_true);

  if (opts.write) {
    std::ostringstream res, tim;
    write_results_csv(res, table);
    write_text(dir / "results.csv", res.str());
    tim << "replicate,seconds\n";
    for (const auto& r : table.rows) tim << r.replicate << ',' << fmt(r.seconds) << '\n';
    write_text(dir / "timings.csv", tim.str());
    if (c.method == Method::age) {
      std::ostringstream tr;
      write_trace_csv(tr, table.rows);
      write_text(dir / "traces.csv", tr.str());
      write_text(dir / "traces.gp", kTracePlot);
    }
    const std::uint64_t budget = expected_budget(c);
    json failures = json::array();
    bool budget_ok = true;
    for (const auto& r : table.rows) {
      if (!r.ok) failures.push_back({{"replicate", r.replicate}, {"error", r.error}});
      if (r.ok && r.evals != budget) budget_ok = false;
    }
    json summary{{"scenario", enum_name(c.scenario, kScenarios)},
                 {"method", to_string(c.method)},
                 {"n_rep", c.n_rep},
                 {"n_ok", est.size()},
                 {"p_true", prep.p_true},
                 {"rmse", number_or_null(table.rmse)},
                 {"bias", number_or_null(table.bias)},
                 {"variance", est.empty() ? json(nullptr) : json(spread_variance(est))},
                 {"expected_budget", budget},
                 {"budget_ok", budget_ok},
                 {"failures", failures}};
    if (prep.world) summary["monopile"] = prep.world->environment;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "results.gp", kResultsPlot);
  }
  return table;
}

Band quantile_band(double lambda, const std::vector<double>& values) {
  Band b;
  b.lambda = lambda;
  if (values.empty()) {
    b.median = kNaN;
    b.lo.fill(kNaN);
    b.hi.fill(kNaN);
    return b;
  }
  b.median = quantile(values, 0.5);
  const std::array<double, 4> widths{0.50, 0.70, 0.90, 0.95};
  for (std::size_t k = 0; k < widths.size(); ++k) {
    b.lo[k] = quantile(values, 0.5 - widths[k] / 2.0);
    b.hi[k] = quantile(values, 0.5 + widths[k] / 2.0);
  }
  return b;
}

void write_bands(std::ostream& os, const std::vector<Band>& bands) {
  os << "# lambda median lo50 hi50 lo70 hi70 lo90 hi90 lo95 hi95\n";
  for (const auto& b : bands) {
    os << fmt(b.lambda) << ' ' << fmt(b.median);
    for (std::size_t k = 0; k < 4; ++k) os << ' ' << fmt(b.lo[k]) << ' ' << fmt(b.hi[k]);
    os << '\n';
  }
}

std::vector<double> evenly_spaced_weights(std::size_t n) {
  if (n == 0) throw std::invalid_argument("need at least one weight");
  if (n == 1) return {0.5};
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return w;
}

SweepResult sweep_lambda(const RunConfig& c, const Prepared& prep, const std::vector<double>& weights,
                         const RunOptions& opts) {
  SweepResult out;
  out.weights = weights;
  const fs::path dir = opts.dir.empty() ? output_dir(c) : opts.dir;
  std::ostringstream iter_bands;
  for (std::size_t w = 0; w < weights.size(); ++w) {
    RunConfig cw = c;
    cw.method = Method::age;
    cw.age.lambda = weights[w];
    char name[48];
    std::snprintf(name, sizeof name, "lambda_%03zu", w);
    RunOptions ow = opts;
    ow.dir = dir / "sweep" / name;
    ResultTable t = run(cw, prep, ow);
    std::vector<double> final_err;
    std::size_t n_iter = 0;
    for (const auto& r : t.rows) {
      if (r.ok && !r.trace.empty()) {
        final_err.push_back(r.trace.back().delta);
        n_iter = std::max(n_iter, r.trace.size());
      }
    }
    out.final_error.push_back(quantile_band(weights[w], final_err));
    iter_bands << "\"" << fmt(weights[w]) << "\"\n";
    for (std::size_t it = 0; it < n_iter; ++it) {
      std::vector<double> at;
      for (const auto& r : t.rows)
        if (r.ok && it < r.trace.size()) at.push_back(r.trace[it].delta);
      const Band b = quantile_band(weights[w], at);
      iter_bands << it << ' ' << fmt(b.median);
      for (std::size_t k = 0; k < 4; ++k) iter_bands << ' ' << fmt(b.lo[k]) << ' ' << fmt(b.hi[k]);
      iter_bands << '\n';
    }
    iter_bands << "\n\n";
    out.tables.push_back(std::move(t));
  }
  if (opts.write) {
    fs::create_directories(dir);
    std::ostringstream bands;
    write_bands(bands, out.final_error);
    write_text(dir / "lambda_bands.dat", bands.str());
    write_text(dir / "lambda_iter_bands.dat", iter_bands.str());
    write_text(dir / "lambda_bands.gp", kBandPlot);
    write_text(dir / "lambda_iter_bands.gp", kIterBandPlot);
  }
  return out;
}

std::vector<ThresholdRow> threshold_stability(const StormPeakSet& peaks, const std::vector<double>& levels) {
  std::vector<ThresholdRow> rows;
  for (const std::string var : {"hs", "se"}) {
    std::vector<double> data;
    for (const auto& p : peaks.peaks) data.push_back(var == "hs" ? p.hs : p.se);
    for (double level : levels) {
      try {
        const MarginalModel m(data, level);
        ThresholdRow r;
        r.variable = var;
        r.level = level;
        r.threshold = m.threshold();
        r.sigma = m.gpd().sigma;
        r.xi = m.gpd().xi;
        r.se_xi = m.gpd().se_xi;
        r.modified_scale = r.sigma - r.xi * r.threshold;
        r.n_exceed = m.gpd().n;
        rows.push_back(r);
      } catch (const std::exception& e) {
        warn(var + " threshold level " + fmt(level) + " skipped: " + e.what());
      }
    }
  }
  return rows;
}

std::vector<BandwidthRow> kde_bandwidth_sweep(const RunConfig& c, const Prepared& prep,
                                              const std::vector<double>& scales) {
  std::vector<BandwidthRow> rows;
  for (double s : scales) {
    RunConfig cs = c;
    cs.method = Method::ispt;
    cs.ispt.bandwidth_scale = s;
    const ResultTable t = run(cs, prep, RunOptions{false, false, {}});
    BandwidthRow r;
    r.scale = s;
    r.rmse = t.rmse;
    r.bias = t.bias;
    r.failures = t.failures;
    double ess = 0.0;
    std::size_t n = 0;
    for (const auto& row : t.rows)
      if (row.ok) {
        ess += row.ess;
        ++n;
      }
    r.mean_ess = n ? ess / static_cast<double>(n) : kNaN;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace failprob
