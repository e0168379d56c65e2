#pragma once

#include <Eigen/Core>

#include <array>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace failprob {

using EnvPoint = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Independent stream for (master seed, stream index).
Rng make_stream(std::uint64_t master_seed, std::uint64_t index);

struct Interval final {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
};

class Box final {
 public:
  Box() = default;
  explicit Box(std::vector<Interval> dims);

  std::size_t dim() const { return dims_.size(); }
  const Interval& operator[](std::size_t k) const { return dims_[k]; }
  const std::vector<Interval>& dims() const { return dims_; }
  bool contains(const EnvPoint& x) const;
  double volume() const;
  double diagonal() const;
  EnvPoint lower() const;
  EnvPoint upper() const;

 private:
  std::vector<Interval> dims_;
};

class EnvGrid final {
 public:
  EnvGrid(Box box, std::vector<std::size_t> counts);

  const Box& box() const { return box_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t dim() const { return counts_.size(); }
  std::size_t size() const { return size_; }
  double cell_area() const { return cell_area_; }
  double step(std::size_t k) const { return steps_[k]; }

  // Row-major: the first coordinate varies slowest.
  EnvPoint center(std::size_t i) const;
  const Eigen::MatrixXd& centers() const { return centers_; }  // size() x dim()
  std::optional<std::size_t> index_of(const EnvPoint& x) const;
  std::vector<std::size_t> unravel(std::size_t i) const;

 private:
  Box box_;
  std::vector<std::size_t> counts_;
  std::vector<double> steps_;
  std::size_t size_ = 0;
  double cell_area_ = 0.0;
  Eigen::MatrixXd centers_;
};

struct GriddedField final {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct FailureSpec final {
  double r_cr = 0.0;
};

// Expensive-evaluation accounting. Units count conditional-probability
// evaluations; draws count raw response realizations.
class EvalCounter final {
 public:
  EvalCounter() = default;
  EvalCounter(const EvalCounter& other);
  EvalCounter& operator=(const EvalCounter& other);

  void add_draws(std::uint64_t n) { draws_.fetch_add(n, std::memory_order_relaxed); }
  void add_units(std::uint64_t n) { units_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t draws() const { return draws_.load(std::memory_order_relaxed); }
  std::uint64_t units() const { return units_.load(std::memory_order_relaxed); }
  void reset();

 private:
  std::atomic<std::uint64_t> draws_{0};
  std::atomic<std::uint64_t> units_{0};
};

class Scenario {
 public:
  virtual ~Scenario() = default;

  virtual const Box& support() const = 0;
  virtual double env_density(const EnvPoint& x) const = 0;
  virtual bool has_exact() const { return false; }
  virtual std::optional<double> exact_cond_fail_prob(const EnvPoint& x, double r_cr) const;
  virtual std::unique_ptr<Scenario> clone() const = 0;
  virtual std::string name() const = 0;

  // Draws n responses and counts them.
  std::vector<double> sample_response(const EnvPoint& x, std::size_t n, Rng& rng);

  EvalCounter& counter() { return counter_; }
  const EvalCounter& counter() const { return counter_; }

 protected:
  virtual void draw_responses(const EnvPoint& x, std::span<double> out, Rng& rng) = 0;

 private:
  EvalCounter counter_;
};

// One budget unit: either the exact value (when available and requested)
// or an empirical estimate from n_rl draws.
double empirical_cond_fail_prob(Scenario& scenario, const EnvPoint& x, std::size_t n_rl,
                                const FailureSpec& spec, Rng& rng);
double cond_fail_prob(Scenario& scenario, const EnvPoint& x, std::size_t n_rl,
                      const FailureSpec& spec, Rng& rng, bool use_exact);

GriddedField cde_brute_force(Scenario& scenario, const EnvGrid& grid, std::size_t n_rl,
                             const FailureSpec& spec, Rng& rng);
GriddedField env_density_field(const Scenario& scenario, const EnvGrid& grid);
double failure_prob_quadrature(const GriddedField& cde, const EnvGrid& grid);

void write_field_csv(std::ostream& os, const EnvGrid& grid, const GriddedField& field);
void write_field_csv(const std::string& path, const EnvGrid& grid, const GriddedField& field);
// Returns (x1, x2, value) rows.
std::vector<std::array<double, 3>> read_field_csv(std::istream& is);

}  // namespace failprob
