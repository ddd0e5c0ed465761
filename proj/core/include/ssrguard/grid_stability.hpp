#pragma once

// Impedance-based stability of a converter cluster behind a Thevenin grid:
// Nyquist distance, resonance detection, worst-case margin and warnings.

#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssrguard/bayesopt.hpp"
#include "ssrguard/sweep.hpp"

namespace ssrguard {

struct GridModel {
  double r_grid = 0.1;   // ohm
  double l_grid = 0.0;   // H
  double w_g = 0.0;      // rad/s

  void validate() const;
};

/// Aggregate data-center impedance as a function of (w [rad/s], P_load [W]).
using ImpedanceProvider = std::function<std::complex<double>(double, double)>;

std::complex<double> grid_impedance(const GridModel& model, double w);
/// Z_grid(w)^-1 * Z_gcdc. Throws InvalidArgument where Z_grid is singular.
std::complex<double> open_loop_gain(const GridModel& model, std::complex<double> z_gcdc, double w);
/// |1 + open_loop_gain|, the distance of the loop gain from (-1, 0).
double distance(const GridModel& model, std::complex<double> z_gcdc, double w);

struct ResonanceCandidate {
  double w = 0.0;                 // rad/s
  double magnitude_gap = 0.0;     // |Z_grid| - |Z_gcdc| at w [ohm]
  double phase_difference = 0.0;  // |angle(Z_grid) - angle(Z_gcdc)| wrapped to [0, 180] deg
};

/// Magnitude crossings of a single-workload curve (sorted by frequency) that
/// also show a phase difference within `phase_tol_deg` of 180 degrees.
/// `mag_tol` is relative to |Z_grid| at the crossing.
std::vector<ResonanceCandidate> find_resonances(const GridModel& model,
                                                const std::vector<ImpedancePoint>& curve,
                                                double mag_tol = 0.01, double phase_tol_deg = 5.0);

struct MarginSearchConfig {
  double w_lo = 0.0;             // 0 -> 2*pi rad/s
  double w_hi = 0.0;             // 0 -> 2 * w_g
  std::size_t coarse_points = 120;
  std::size_t bo_evaluations = 50;
  std::size_t candidates = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MarginReport {
  double p_load = 0.0;
  double m_ssr = 0.0;          // min distance over the interval
  double w_vul = 0.0;          // rad/s
  double dist_nominal = 0.0;   // distance at w_g
  double m_bar = 0.0;          // m_ssr / dist_nominal
  std::vector<Probe> probes;   // every (w, dist) evaluated by the search
};

/// Worst-case search: coarse uniform scan seeding a Bayesian minimizer.
MarginReport safety_margin(const GridModel& model, const ImpedanceProvider& provider, double p_load,
                           const MarginSearchConfig& config = {});

/// m / dist_nominal; throws if the nominal distance is not positive.
double normalized_margin(double m_ssr, double dist_nominal);

enum class Verdict { Safe, Risky };
std::string to_string(Verdict v);

struct WarningVerdict {
  Verdict verdict = Verdict::Risky;
  double threshold = 0.2;
  MarginReport report;
};

/// Safe iff the normalized margin strictly exceeds the threshold.
WarningVerdict early_warning(const MarginReport& report, double threshold = 0.2);

/// Margins for every (L_grid, workload) pair. Rows follow `l_grid_values`.
struct MarginMatrix {
  std::vector<double> l_grid_values;   // H
  std::vector<double> workloads;       // W
  std::vector<std::vector<MarginReport>> cells;
};

MarginMatrix margin_matrix(double r_grid, const std::vector<double>& l_grid_values, double w_g,
                           const ImpedanceProvider& provider, const std::vector<double>& workloads,
                           const MarginSearchConfig& config = {});

/// `l_grid_mh,p_load_w,m_ssr,m_bar,w_vul_hz,verdict,threshold`, one row per cell.
void write_margin_reports_csv(std::ostream& out, const MarginMatrix& matrix, double threshold);
/// Normalized margins laid out with one row per L_grid (in mH) and one column per workload.
void write_margin_matrix_csv(std::ostream& out, const MarginMatrix& matrix);

}  // namespace ssrguard
