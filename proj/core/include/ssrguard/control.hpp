#pragma once

// Preventive workload control: pick the setpoint that trades normalized SSR
// margin against a quadratic rescheduling penalty.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssrguard/grid_stability.hpp"
#include "ssrguard/surrogate.hpp"

namespace ssrguard {

/// Aggregate impedance of `n_converters` identical units, each described by `model`.
/// The model is captured by reference and must outlive the provider.
ImpedanceProvider surrogate_provider(const SurrogateModel& model, std::size_t n_converters);

struct ControlConfig {
  double p_set = 0.0;            // W
  double beta = 5e-7;            // W^-2
  double p_min = 800.0;          // W
  double p_max = 3600.0;         // W
  double max_deviation = 600.0;  // W
  std::size_t outer_budget = 20;
  std::size_t outer_init = 7;    // uniform probes over the feasible window, plus P_set
  MarginSearchConfig inner;      // same seed for every outer probe

  void validate() const;
};

struct ControlDecision {
  double p_set = 0.0;
  double p_load = 0.0;           // W
  double w_vul_hz = 0.0;         // at p_load
  double m_bar = 0.0;            // at p_load
  double m_bar_set = 0.0;        // at p_set
  double margin_increase = 0.0;  // m_bar - m_bar_set
  double power_diff = 0.0;       // p_load - p_set
  double objective = 0.0;        // at p_load
  double objective_set = 0.0;    // at p_set (the "do nothing" value)
  std::vector<Probe> history;    // outer probes (P, objective)
};

ControlDecision preventive_control(const GridModel& grid, const ImpedanceProvider& provider,
                                   const ControlConfig& config);

struct ScanPoint {
  double p_load = 0.0;
  double m_bar = 0.0;
  double m_ssr = 0.0;
  double w_vul_hz = 0.0;
};

struct ScanFailure {
  double p_load = 0.0;
  std::string message;
};

struct MarginScan {
  std::vector<ScanPoint> points;
  std::vector<ScanFailure> failures;
};

MarginScan margin_scan(const GridModel& grid, const ImpedanceProvider& provider,
                       const std::vector<double>& workloads, const MarginSearchConfig& inner = {});

/// Interior local minima of m_bar with strictly higher values on both sides,
/// together with the maxima of the regions to the left and right.
struct Basin {
  double p_bottom = 0.0;
  double m_bottom = 0.0;
  double left_peak = 0.0;
  double right_peak = 0.0;
};
std::vector<Basin> find_basins(const std::vector<ScanPoint>& scan);

/// `l_grid_mh,p_set_w,p_load_w,w_vul_hz,margin_increase,power_diff_w`
void write_decisions_csv(std::ostream& out, const std::vector<std::pair<double, ControlDecision>>& rows);

}  // namespace ssrguard
