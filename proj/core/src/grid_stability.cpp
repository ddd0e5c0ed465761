#include "ssrguard/grid_stability.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

// |a - b| for angles, folded into [0, 180] degrees.
double phase_gap_deg(double a, double b) {
  double d = std::fmod(std::abs(rad_to_deg(a - b)), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace

void GridModel::validate() const {
  if (!(r_grid >= 0.0) || !std::isfinite(r_grid)) throw InvalidArgument("grid.r_grid must be >= 0");
  if (!(l_grid > 0.0) || !std::isfinite(l_grid)) throw InvalidArgument("grid.l_grid must be > 0");
  if (!(w_g > 0.0) || !std::isfinite(w_g)) throw InvalidArgument("grid.w_g must be > 0");
}

std::complex<double> grid_impedance(const GridModel& model, double w) {
  if (!(w >= 0.0)) throw InvalidArgument("grid_impedance: frequency must be >= 0");
  return {model.r_grid, w * model.l_grid};
}

std::complex<double> open_loop_gain(const GridModel& model, std::complex<double> z_gcdc, double w) {
  const std::complex<double> zg = grid_impedance(model, w);
  if (zg == 0.0) {
    throw InvalidArgument("open_loop_gain: grid impedance is singular at w = " + format_double(w));
  }
  return z_gcdc / zg;
}

double distance(const GridModel& model, std::complex<double> z_gcdc, double w) {
  // |1 + Z_gcdc / Z_grid| evaluated as |Z_grid + Z_gcdc| / |Z_grid|, which is
  // exactly zero when Z_gcdc = -Z_grid.
  const std::complex<double> zg = grid_impedance(model, w);
  if (zg == 0.0) {
    throw InvalidArgument("distance: grid impedance is singular at w = " + format_double(w));
  }
  return std::abs(zg + z_gcdc) / std::abs(zg);
}

std::vector<ResonanceCandidate> find_resonances(const GridModel& model,
                                                const std::vector<ImpedancePoint>& curve,
                                                double mag_tol, double phase_tol_deg) {
  std::vector<ResonanceCandidate> out;
  const auto gap = [&](const ImpedancePoint& p) {
    return std::abs(grid_impedance(model, p.w_hm())) - p.magnitude();
  };
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const ImpedancePoint& a = curve[i];
    const ImpedancePoint& b = curve[i + 1];
    const double ga = gap(a);
    const double gb = gap(b);
    // A crossing exactly on a sample belongs to the pair that starts there
    // (the last sample is claimed by the final pair).
    const bool last = i + 2 == curve.size();
    const bool crosses = ga == 0.0 || (ga < 0.0 && gb > 0.0) || (ga > 0.0 && gb < 0.0) ||
                         (last && gb == 0.0);
    if (!crosses) continue;
    const double t = ga == gb ? 0.0 : ga / (ga - gb);
    const double w = a.w_hm() + t * (b.w_hm() - a.w_hm());
    const std::complex<double> z = a.z() + t * (b.z() - a.z());
    const std::complex<double> zg = grid_impedance(model, w);
    const double mag_gap = std::abs(zg) - std::abs(z);
    const double pd = phase_gap_deg(std::arg(zg), std::arg(z));
    if (std::abs(mag_gap) < mag_tol * std::abs(zg) && std::abs(pd - 180.0) < phase_tol_deg) {
      out.push_back({w, mag_gap, pd});
    }
  }
  return out;
}

void MarginSearchConfig::validate() const {
  if (coarse_points < 2) throw InvalidArgument("margin search needs at least two coarse points");
  if (candidates < 2) throw InvalidArgument("margin search needs at least two candidates");
  if (w_lo < 0.0 || w_hi < 0.0) throw InvalidArgument("margin search bounds must be >= 0");
}

MarginReport safety_margin(const GridModel& model, const ImpedanceProvider& provider, double p_load,
                           const MarginSearchConfig& config) {
  model.validate();
  config.validate();
  const SearchSpace space{config.w_lo > 0.0 ? config.w_lo : kTwoPi,
                          config.w_hi > 0.0 ? config.w_hi : 2.0 * model.w_g};
  space.validate();

  const auto dist_at = [&](double w) {
    std::complex<double> z;
    try {
      z = provider(w, p_load);
    } catch (const std::exception& e) {
      throw Error("impedance provider failed at w = " + format_double(w) + " rad/s (" +
                  format_double(w / kTwoPi) + " Hz): " + e.what());
    }
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw Error("impedance provider returned a non-finite value at w = " + format_double(w) +
                  " rad/s (" + format_double(w / kTwoPi) + " Hz)");
    }
    return distance(model, z, w);
  };

  BoOptions bo;
  bo.init_probes = uniform_probes(space, config.coarse_points);
  bo.budget = config.coarse_points + config.bo_evaluations;
  bo.candidates = config.candidates;
  bo.seed = config.seed;
  OptimResult res = minimize(dist_at, space, bo);

  MarginReport r;
  r.p_load = p_load;
  r.m_ssr = res.best_f;
  r.w_vul = res.best_x;
  r.dist_nominal = dist_at(model.w_g);
  r.m_bar = normalized_margin(r.m_ssr, r.dist_nominal);
  r.probes = std::move(res.history);
  return r;
}

double normalized_margin(double m_ssr, double dist_nominal) {
  if (!(dist_nominal > 0.0) || !std::isfinite(dist_nominal)) {
    throw InvalidArgument("nominal distance is " + format_double(dist_nominal) +
                          "; the system is already resonant at the grid frequency");
  }
  return m_ssr / dist_nominal;
}

std::string to_string(Verdict v) { return v == Verdict::Safe ? "safe" : "risky"; }

WarningVerdict early_warning(const MarginReport& report, double threshold) {
  return {report.m_bar > threshold ? Verdict::Safe : Verdict::Risky, threshold, report};
}

MarginMatrix margin_matrix(double r_grid, const std::vector<double>& l_grid_values, double w_g,
                           const ImpedanceProvider& provider, const std::vector<double>& workloads,
                           const MarginSearchConfig& config) {
  MarginMatrix m{l_grid_values, workloads, {}};
  for (double l : l_grid_values) {
    const GridModel grid{r_grid, l, w_g};
    auto& row = m.cells.emplace_back();
    for (double p : workloads) {
      try {
        row.push_back(safety_margin(grid, provider, p, config));
      } catch (const std::exception& e) {
        throw Error("margin cell (L_grid=" + format_double(l * 1e3) + " mH, P=" + format_double(p) +
                    " W): " + e.what());
      }
    }
  }
  return m;
}

void write_margin_reports_csv(std::ostream& out, const MarginMatrix& matrix, double threshold) {
  out << "l_grid_mh,p_load_w,m_ssr,m_bar,w_vul_hz,verdict,threshold\n";
  for (std::size_t i = 0; i < matrix.cells.size(); ++i) {
    for (const MarginReport& r : matrix.cells[i]) {
      out << format_double(matrix.l_grid_values[i] * 1e3) << ',' << format_double(r.p_load) << ','
          << format_double(r.m_ssr) << ',' << format_double(r.m_bar) << ','
          << format_double(r.w_vul / kTwoPi) << ',' << to_string(early_warning(r, threshold).verdict)
          << ',' << format_double(threshold) << '\n';
    }
  }
}

void write_margin_matrix_csv(std::ostream& out, const MarginMatrix& matrix) {
  out << "l_grid_mh";
  for (double p : matrix.workloads) out << ",p" << format_double(p);
  out << '\n';
  for (std::size_t i = 0; i < matrix.cells.size(); ++i) {
    out << format_double(matrix.l_grid_values[i] * 1e3);
    for (const MarginReport& r : matrix.cells[i]) out << ',' << format_double(r.m_bar);
    out << '\n';
  }
}

}  // namespace ssrguard
