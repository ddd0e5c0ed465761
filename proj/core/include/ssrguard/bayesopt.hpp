#pragma once

// One-dimensional Bayesian optimization: Gaussian-process surrogate with a
// squared-exponential kernel and expected-improvement acquisition.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace ssrguard {

struct SearchSpace {
  double lower = 0.0;
  double upper = 1.0;

  double width() const { return upper - lower; }
  bool contains(double x) const { return x >= lower && x <= upper; }
  void validate() const;
};

struct Probe {
  double x = 0.0;
  double f = 0.0;
  friend bool operator==(const Probe&, const Probe&) = default;
};

struct OptimResult {
  double best_x = 0.0;
  double best_f = 0.0;
  std::size_t evaluations = 0;
  std::vector<Probe> history;  // in probe order, initial probes first
};

struct BoOptions {
  std::size_t budget = 25;               // total objective evaluations
  std::uint64_t seed = 0;
  std::vector<double> init_probes;       // explicit seeds; when empty, `random_init` uniform draws
  std::size_t random_init = 5;
  std::size_t candidates = 1000;         // acquisition grid
  double jitter = 1e-8;                  // on the unit-variance correlation matrix
  std::size_t length_scale_grid = 12;    // geometric grid for the ML fit, on normalized x
  double min_length_scale = 2e-3;
  double max_length_scale = 0.5;
  std::size_t refit_every = 10;          // iterations between length-scale fits

  void validate() const;
};

using Objective = std::function<double(double)>;

/// Minimizes `objective` over the closed interval. Exactly `budget` evaluations
/// are made. Throws Error naming the probe if the objective returns a non-finite value.
OptimResult minimize(const Objective& objective, const SearchSpace& space, const BoOptions& options);

/// Negate-and-minimize; history and best value are reported un-negated.
OptimResult maximize(const Objective& objective, const SearchSpace& space, const BoOptions& options);

/// Evenly spaced probes including both endpoints.
std::vector<double> uniform_probes(const SearchSpace& space, std::size_t count);

/// Exact-interpolation GP used by the optimizer, exposed for testing.
class GaussianProcess1D {
 public:
  GaussianProcess1D(double length_scale, double jitter);

  /// Inputs are expected on [0, 1]; targets are standardized internally.
  void fit(const std::vector<double>& x, const std::vector<double>& y);
  double mean(double x) const;
  double variance(double x) const;
  double length_scale() const { return length_scale_; }
  double jitter() const { return jitter_; }  // may grow if factorization needed it

  /// Profile (amplitude-maximized) log marginal likelihood of standardized
  /// targets for a given length scale; -inf if the factorization fails.
  static double profile_log_likelihood(const std::vector<double>& x, const std::vector<double>& y,
                                       double length_scale, double jitter);

 private:
  double length_scale_;
  double jitter_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double amplitude_ = 1.0;
  std::vector<double> x_;
  std::vector<double> alpha_;
  std::vector<double> chol_;  // row-major lower factor, n x n
};

void write_history_csv(std::ostream& out, const OptimResult& result);

}  // namespace ssrguard
