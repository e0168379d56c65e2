#include "failprob/core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace failprob {

Rng make_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

Box::Box(std::vector<Interval> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("box must have at least one dimension");
  for (const auto& d : dims_) {
    if (!std::isfinite(d.lo) || !std::isfinite(d.hi) || !(d.hi > d.lo))
      throw std::invalid_argument("box interval must satisfy lo < hi");
  }
}

bool Box::contains(const EnvPoint& x) const {
  if (static_cast<std::size_t>(x.size()) != dims_.size()) return false;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (!(x[k] >= dims_[k].lo && x[k] <= dims_[k].hi)) return false;
  }
  return true;
}

double Box::volume() const {
  double v = 1.0;
  for (const auto& d : dims_) v *= d.width();
  return v;
}

double Box::diagonal() const {
  double s = 0.0;
  for (const auto& d : dims_) s += d.width() * d.width();
  return std::sqrt(s);
}

EnvPoint Box::lower() const {
  EnvPoint x(dims_.size());
  for (std::size_t k = 0; k < dims_.size(); ++k) x[k] = dims_[k].lo;
  return x;
}

EnvPoint Box::upper() const {
  EnvPoint x(dims_.size());
  for (std::size_t k = 0; k < dims_.size(); ++k) x[k] = dims_[k].hi;
  return x;
}

EnvGrid::EnvGrid(Box box, std::vector<std::size_t> counts) : box_(std::move(box)), counts_(std::move(counts)) {
  if (counts_.size() != box_.dim()) throw std::invalid_argument("grid counts must match box dimension");
  size_ = 1;
  cell_area_ = 1.0;
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    if (counts_[k] < 1) throw std::invalid_argument("grid needs at least one cell per dimension");
    steps_.push_back(box_[k].width() / static_cast<double>(counts_[k]));
    size_ *= counts_[k];
    cell_area_ *= steps_.back();
  }
  centers_.resize(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < size_; ++i) centers_.row(static_cast<Eigen::Index>(i)) = center(i).transpose();
}

std::vector<std::size_t> EnvGrid::unravel(std::size_t i) const {
  std::vector<std::size_t> idx(counts_.size());
  for (std::size_t k = counts_.size(); k-- > 0;) {
    idx[k] = i % counts_[k];
    i /= counts_[k];
  }
  return idx;
}

EnvPoint EnvGrid::center(std::size_t i) const {
  const auto idx = unravel(i);
  EnvPoint x(counts_.size());
  for (std::size_t k = 0; k < counts_.size(); ++k)
    x[k] = box_[k].lo + (static_cast<double>(idx[k]) + 0.5) * steps_[k];
  return x;
}

std::optional<std::size_t> EnvGrid::index_of(const EnvPoint& x) const {
  if (!box_.contains(x)) return std::nullopt;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    auto j = static_cast<std::size_t>(std::floor((x[k] - box_[k].lo) / steps_[k]));
    if (j >= counts_[k]) j = counts_[k] - 1;
    flat = flat * counts_[k] + j;
  }
  return flat;
}

EvalCounter::EvalCounter(const EvalCounter& other) : draws_(other.draws()), units_(other.units()) {}

EvalCounter& EvalCounter::operator=(const EvalCounter& other) {
  draws_.store(other.draws());
  units_.store(other.units());
  return *this;
}

void EvalCounter::reset() {
  draws_.store(0);
  units_.store(0);
}

std::optional<double> Scenario::exact_cond_fail_prob(const EnvPoint&, double) const { return std::nullopt; }

std::vector<double> Scenario::sample_response(const EnvPoint& x, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  draw_responses(x, out, rng);
  counter_.add_draws(n);
  return out;
}

namespace {

std::string describe(const EnvPoint& x) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ')';
  return os.str();
}

}  // namespace

double empirical_cond_fail_prob(Scenario& scenario, const EnvPoint& x, std::size_t n_rl, const FailureSpec& spec,
                                Rng& rng) {
  if (n_rl < 1) throw std::invalid_argument("n_rl must be at least 1");
  const auto draws = scenario.sample_response(x, n_rl, rng);
  scenario.counter().add_units(1);
  std::size_t hits = 0;
  for (double r : draws) {
    if (!std::isfinite(r)) throw std::runtime_error("non-finite response draw at x=" + describe(x));
    if (r > spec.r_cr) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_rl);
}

double cond_fail_prob(Scenario& scenario, const EnvPoint& x, std::size_t n_rl, const FailureSpec& spec, Rng& rng,
                      bool use_exact) {
  if (use_exact) {
    if (auto p = scenario.exact_cond_fail_prob(x, spec.r_cr)) {
      scenario.counter().add_units(1);
      return *p;
    }
  }
  return empirical_cond_fail_prob(scenario, x, n_rl, spec, rng);
}

GriddedField cde_brute_force(Scenario& scenario, const EnvGrid& grid, std::size_t n_rl, const FailureSpec& spec,
                             Rng& rng) {
  GriddedField field{grid.counts(), std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const EnvPoint x = grid.center(i);
    const double f = scenario.env_density(x);
    const double p = cond_fail_prob(scenario, x, n_rl, spec, rng, true);
    field.values[i] = p * f;
  }
  return field;
}

GriddedField env_density_field(const Scenario& scenario, const EnvGrid& grid) {
  GriddedField field{grid.counts(), std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) field.values[i] = scenario.env_density(grid.center(i));
  return field;
}

double failure_prob_quadrature(const GriddedField& cde, const EnvGrid& grid) {
  if (cde.shape != grid.counts() || cde.values.size() != grid.size())
    throw std::invalid_argument("field dimensions do not match grid");
  double s = 0.0;
  for (double v : cde.values) s += v;
  return s * grid.cell_area();
}

void write_field_csv(std::ostream& os, const EnvGrid& grid, const GriddedField& field) {
  if (field.values.size() != grid.size()) throw std::invalid_argument("field dimensions do not match grid");
  os << "x1,x2,value\n";
  char buf[128];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const EnvPoint c = grid.center(i);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", c[0], c[1], field.values[i]);
    os << buf;
  }
}

void write_field_csv(const std::string& path, const EnvGrid& grid, const GriddedField& field) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  write_field_csv(os, grid, field);
}

std::vector<std::array<double, 3>> read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x1,x2,value", 0) != 0)
    throw std::runtime_error("field CSV must start with header x1,x2,value");
  std::vector<std::array<double, 3>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 3> row{};
    std::istringstream ls(line);
    std::string cell;
    for (auto& v : row) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error("short row in field CSV: " + line);
      v = std::stod(cell);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace failprob
