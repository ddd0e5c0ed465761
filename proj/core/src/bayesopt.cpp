#include "ssrguard/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double sq_exp(double a, double b, double ell) {
  const double d = (a - b) / ell;
  return std::exp(-0.5 * d * d);
}

struct Standardized {
  VectorXd y;
  double mean = 0.0;
  double scale = 1.0;
};

Standardized standardize(const std::vector<double>& y) {
  Standardized s;
  const auto n = static_cast<Eigen::Index>(y.size());
  s.y = Eigen::Map<const VectorXd>(y.data(), n);
  s.mean = s.y.mean();
  const double var = n > 1 ? (s.y.array() - s.mean).square().sum() / static_cast<double>(n) : 0.0;
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  s.y = (s.y.array() - s.mean) / s.scale;
  return s;
}

MatrixXd correlation(const std::vector<double>& x, double ell, double jitter) {
  const auto n = static_cast<Eigen::Index>(x.size());
  MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 1.0 + jitter;
    for (Eigen::Index j = 0; j < i; ++j) r(i, j) = r(j, i) = sq_exp(x[i], x[j], ell);
  }
  return r;
}

// Cholesky with jitter escalation; returns false if even the largest jitter fails.
bool factor(const std::vector<double>& x, double ell, double& jitter, MatrixXd& lower) {
  for (double j = jitter; j <= 1e-2; j *= 10.0) {
    Eigen::LLT<MatrixXd> llt(correlation(x, ell, j));
    if (llt.info() == Eigen::Success) {
      lower = llt.matrixL();
      jitter = j;
      return true;
    }
  }
  return false;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double best, double mu, double sigma) {
  if (sigma < 1e-12) return std::max(best - mu, 0.0);
  const double z = (best - mu) / sigma;
  return (best - mu) * normal_cdf(z) + sigma * normal_pdf(z);
}

// GP state for the optimizer. Keeps the Cholesky factor L of the correlation
// matrix and V = L^{-1} R(X, C) for the candidate grid, both extended one
// row per new observation so an iteration costs O(n * |C|).
class IncrementalGp {
 public:
  IncrementalGp(std::vector<double> candidates, double jitter)
      : cand_(std::move(candidates)), jitter_(jitter) {}

  void rebuild(const std::vector<double>& x, double ell) {
    ell_ = ell;
    x_ = x;
    const auto n = static_cast<Eigen::Index>(x_.size());
    double j = jitter_;
    if (!factor(x_, ell_, j, lower_)) throw Error("GP factorization failed for every jitter level");
    jitter_used_ = j;
    const auto m = static_cast<Eigen::Index>(cand_.size());
    MatrixXd k(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < m; ++c) k(i, c) = sq_exp(x_[i], cand_[c], ell_);
    }
    v_ = lower_.triangularView<Eigen::Lower>().solve(k);
    v_sq_ = v_.colwise().squaredNorm().transpose();
  }

  // Appends one observation location; falls back to a full rebuild when the
  // new pivot is numerically non-positive.
  void append(double x) {
    const auto n = static_cast<Eigen::Index>(x_.size());
    VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = sq_exp(x_[i], x, ell_);
    const VectorXd l = lower_.triangularView<Eigen::Lower>().solve(r);
    const double d2 = 1.0 + jitter_used_ - l.squaredNorm();
    if (!(d2 > 1e-12)) {
      auto xs = x_;
      xs.push_back(x);
      rebuild(xs, ell_);
      return;
    }
    const double d = std::sqrt(d2);
    x_.push_back(x);
    lower_.conservativeResize(n + 1, n + 1);
    lower_.row(n).head(n) = l.transpose();
    lower_.col(n).head(n).setZero();
    lower_(n, n) = d;

    const auto m = static_cast<Eigen::Index>(cand_.size());
    Eigen::RowVectorXd row(m);
    for (Eigen::Index c = 0; c < m; ++c) row(c) = sq_exp(x, cand_[c], ell_);
    row = (row - l.transpose() * v_) / d;
    v_.conservativeResize(n + 1, Eigen::NoChange);
    v_.row(n) = row;
    v_sq_ += row.transpose().array().square().matrix();
  }

  // Posterior mean/sd at the candidates for standardized targets.
  void posterior(const VectorXd& y_std, VectorXd& mu, VectorXd& sd) const {
    const VectorXd w = lower_.triangularView<Eigen::Lower>().solve(y_std);
    const double amp2 = w.squaredNorm() / static_cast<double>(w.size());  // profile amplitude
    mu = v_.transpose() * w;
    sd = ((1.0 - v_sq_.array()).max(0.0) * amp2).sqrt();
  }

 private:
  std::vector<double> cand_;
  double jitter_;
  double jitter_used_ = 0.0;
  double ell_ = 0.1;
  std::vector<double> x_;
  MatrixXd lower_;
  MatrixXd v_;
  VectorXd v_sq_;
};

double fit_length_scale(const std::vector<double>& x, const std::vector<double>& y,
                        const BoOptions& opt) {
  const std::size_t n = std::max<std::size_t>(opt.length_scale_grid, 1);
  double best_ell = opt.max_length_scale;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double ell = opt.min_length_scale * std::pow(opt.max_length_scale / opt.min_length_scale, t);
    const double ll = GaussianProcess1D::profile_log_likelihood(x, y, ell, opt.jitter);
    if (ll > best_ll) {
      best_ll = ll;
      best_ell = ell;
    }
  }
  return best_ell;
}

double call_checked(const Objective& f, double x) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    throw Error("objective returned a non-finite value at x = " + format_double(x));
  }
  return v;
}

}  // namespace

void SearchSpace::validate() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
    throw InvalidArgument("search space needs finite bounds with lower < upper, got [" +
                          format_double(lower) + ", " + format_double(upper) + "]");
  }
}

void BoOptions::validate() const {
  const std::size_t n_init = init_probes.empty() ? random_init : init_probes.size();
  if (n_init < 2) throw InvalidArgument("optimizer needs at least two initial probes");
  if (budget < n_init) {
    throw InvalidArgument("optimizer budget " + std::to_string(budget) +
                          " is smaller than the initial probe count " + std::to_string(n_init));
  }
  if (candidates < 2) throw InvalidArgument("optimizer needs at least two acquisition candidates");
  if (!(jitter > 0.0)) throw InvalidArgument("optimizer jitter must be > 0");
  if (!(min_length_scale > 0.0) || !(max_length_scale >= min_length_scale)) {
    throw InvalidArgument("optimizer length-scale range is invalid");
  }
}

std::vector<double> uniform_probes(const SearchSpace& space, std::size_t count) {
  space.validate();
  if (count < 2) throw InvalidArgument("uniform_probes needs at least two points");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = i + 1 == count ? space.upper : space.lower + t * space.width();
  }
  return out;
}

GaussianProcess1D::GaussianProcess1D(double length_scale, double jitter)
    : length_scale_(length_scale), jitter_(jitter) {
  if (!(length_scale > 0.0) || !(jitter > 0.0)) {
    throw InvalidArgument("GP needs a positive length scale and jitter");
  }
}

void GaussianProcess1D::fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) throw InvalidArgument("GP fit needs matching non-empty x, y");
  const Standardized s = standardize(y);
  MatrixXd lower;
  if (!factor(x, length_scale_, jitter_, lower)) throw Error("GP factorization failed");
  const auto n = static_cast<Eigen::Index>(x.size());
  VectorXd a = lower.triangularView<Eigen::Lower>().solve(s.y);
  amplitude_ = std::max(a.squaredNorm() / static_cast<double>(n), 1e-300);
  a = lower.transpose().triangularView<Eigen::Upper>().solve(a);
  x_ = x;
  y_mean_ = s.mean;
  y_scale_ = s.scale;
  alpha_.assign(a.data(), a.data() + n);
  chol_.resize(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) chol_[static_cast<std::size_t>(i * n + j)] = lower(i, j);
  }
}

double GaussianProcess1D::mean(double x) const {
  double m = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) m += alpha_[i] * sq_exp(x_[i], x, length_scale_);
  return y_mean_ + y_scale_ * m;
}

double GaussianProcess1D::variance(double x) const {
  const std::size_t n = x_.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = sq_exp(x_[i], x, length_scale_);
    for (std::size_t j = 0; j < i; ++j) s -= chol_[i * n + j] * v[j];
    v[i] = s / chol_[i * n + i];
  }
  double q = 0.0;
  for (double e : v) q += e * e;
  return std::max(1.0 - q, 0.0) * amplitude_ * y_scale_ * y_scale_;
}

double GaussianProcess1D::profile_log_likelihood(const std::vector<double>& x,
                                                 const std::vector<double>& y, double length_scale,
                                                 double jitter) {
  const Standardized s = standardize(y);
  Eigen::LLT<MatrixXd> llt(correlation(x, length_scale, jitter));
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const MatrixXd lower = llt.matrixL();
  const VectorXd a = lower.triangularView<Eigen::Lower>().solve(s.y);
  const double n = static_cast<double>(x.size());
  const double amp2 = std::max(a.squaredNorm() / n, 1e-300);
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  return -0.5 * (n * std::log(amp2) + log_det + n);
}

OptimResult minimize(const Objective& objective, const SearchSpace& space, const BoOptions& options) {
  space.validate();
  options.validate();

  std::vector<double> init = options.init_probes;
  if (init.empty()) {
    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.random_init; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      init.push_back(space.lower + u * space.width());
    }
  }
  for (double x : init) {
    if (!space.contains(x)) {
      throw InvalidArgument("initial probe " + format_double(x) + " lies outside the search space");
    }
  }

  OptimResult result;
  const auto record = [&](double x) {
    const double f = call_checked(objective, x);
    result.history.push_back({x, f});
    if (result.history.size() == 1 || f < result.best_f) {
      result.best_f = f;
      result.best_x = x;
    }
  };
  for (double x : init) record(x);

  const double lo = space.lower;
  const double w = space.width();
  const auto to_unit = [&](double x) { return (x - lo) / w; };

  if (result.history.size() < options.budget) {
    std::vector<double> cand_unit(options.candidates);
    for (std::size_t c = 0; c < options.candidates; ++c) {
      cand_unit[c] = static_cast<double>(c) / static_cast<double>(options.candidates - 1);
    }
    std::vector<bool> probed(options.candidates, false);
    const auto mark = [&](double u) {
      const double pos = u * static_cast<double>(options.candidates - 1);
      const double idx = std::round(pos);
      if (std::abs(pos - idx) < 1e-9) probed[static_cast<std::size_t>(idx)] = true;
    };

    std::vector<double> xu;
    std::vector<double> ys;
    for (const Probe& p : result.history) {
      xu.push_back(to_unit(p.x));
      ys.push_back(p.f);
      mark(xu.back());
    }

    IncrementalGp gp(cand_unit, options.jitter);
    std::size_t since_fit = 0;
    bool fresh = false;
    VectorXd mu;
    VectorXd sd;
    while (result.history.size() < options.budget) {
      if (!fresh || since_fit >= std::max<std::size_t>(options.refit_every, 1)) {
        gp.rebuild(xu, fit_length_scale(xu, ys, options));
        since_fit = 0;
        fresh = true;
      }
      const Standardized s = standardize(ys);
      gp.posterior(s.y, mu, sd);
      const double best_std = (result.best_f - s.mean) / s.scale;

      // Highest EI among unprobed candidates; ties go to the lower index. When
      // EI vanishes everywhere, fall back to the most uncertain candidate.
      std::size_t pick = options.candidates;
      double best_ei = 0.0;
      std::size_t widest = options.candidates;
      double widest_sd = -1.0;
      for (std::size_t c = 0; c < options.candidates; ++c) {
        if (probed[c]) continue;
        const auto ci = static_cast<Eigen::Index>(c);
        const double ei = expected_improvement(best_std, mu(ci), sd(ci));
        if (ei > best_ei) {
          best_ei = ei;
          pick = c;
        }
        if (sd(ci) > widest_sd) {
          widest_sd = sd(ci);
          widest = c;
        }
      }
      if (pick == options.candidates) pick = widest;
      if (pick == options.candidates) {
        // Every candidate already probed: re-probe the incumbent.
        pick = static_cast<std::size_t>(std::round(to_unit(result.best_x) *
                                                   static_cast<double>(options.candidates - 1)));
      }
      probed[pick] = true;
      const double u = cand_unit[pick];
      const double x = pick + 1 == options.candidates ? space.upper : lo + u * w;
      record(x);
      xu.push_back(u);
      ys.push_back(result.history.back().f);
      gp.append(u);
      ++since_fit;
    }
  }
  result.evaluations = result.history.size();
  return result;
}

OptimResult maximize(const Objective& objective, const SearchSpace& space, const BoOptions& options) {
  OptimResult r = minimize([&](double x) { return -objective(x); }, space, options);
  for (Probe& p : r.history) p.f = -p.f;
  r.best_f = -r.best_f;
  return r;
}

void write_history_csv(std::ostream& out, const OptimResult& result) {
  out << "iter,x,f\n";
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    out << i << ',' << format_double(result.history[i].x) << ','
        << format_double(result.history[i].f) << '\n';
  }
}

}  // namespace ssrguard
