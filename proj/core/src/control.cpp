#include "ssrguard/control.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

ImpedanceProvider surrogate_provider(const SurrogateModel& model, std::size_t n_converters) {
  if (n_converters == 0) throw InvalidArgument("converter count must be >= 1");
  const double n = static_cast<double>(n_converters);
  return [&model, n](double w, double p) { return model.predict(w, p) / n; };
}

void ControlConfig::validate() const {
  if (!std::isfinite(p_min) || !std::isfinite(p_max) || !(p_min <= p_max)) {
    throw InvalidArgument("control: need finite p_min <= p_max");
  }
  if (!(p_set >= p_min && p_set <= p_max)) {
    throw InvalidArgument("control: p_set " + format_double(p_set) + " W outside [" +
                          format_double(p_min) + ", " + format_double(p_max) + "] W");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("control: beta must be >= 0");
  if (!(max_deviation > 0.0)) throw InvalidArgument("control: max_deviation must be > 0");
  if (outer_init < 2) throw InvalidArgument("control: outer_init must be >= 2");
  if (outer_budget < outer_init + 1) {
    throw InvalidArgument("control: outer_budget must cover the initial probes and P_set");
  }
  inner.validate();
}

ControlDecision preventive_control(const GridModel& grid, const ImpedanceProvider& provider,
                                   const ControlConfig& config) {
  grid.validate();
  config.validate();
  const double lo = std::max(config.p_min, config.p_set - config.max_deviation);
  const double hi = std::min(config.p_max, config.p_set + config.max_deviation);
  if (lo > hi) throw InvalidArgument("control: deviation bound leaves no feasible workload");

  // Inner results are memoized; every probe uses the same inner seed.
  std::map<double, MarginReport> cache;
  const auto report_at = [&](double p) -> const MarginReport& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, safety_margin(grid, provider, p, config.inner)).first;
    return it->second;
  };
  const auto objective = [&](double p) {
    const double d = p - config.p_set;
    return report_at(p).m_bar - config.beta * d * d;
  };

  ControlDecision dec;
  dec.p_set = config.p_set;
  dec.objective_set = objective(config.p_set);
  dec.m_bar_set = report_at(config.p_set).m_bar;

  double best_p = config.p_set;
  double best_j = dec.objective_set;
  if (hi > lo) {
    // P_set goes first so that ties keep the do-nothing decision.
    BoOptions bo;
    bo.init_probes.push_back(config.p_set);
    for (double p : uniform_probes({lo, hi}, config.outer_init)) {
      if (p != config.p_set) bo.init_probes.push_back(p);
    }
    bo.budget = std::max(config.outer_budget, bo.init_probes.size());
    bo.seed = config.inner.seed;
    const OptimResult res = maximize(objective, {lo, hi}, bo);
    dec.history = res.history;
    if (res.best_f > best_j) {
      best_j = res.best_f;
      best_p = res.best_x;
    }
  } else {
    dec.history.push_back({config.p_set, dec.objective_set});
  }

  const MarginReport& r = report_at(best_p);
  dec.p_load = best_p;
  dec.objective = best_j;
  dec.m_bar = r.m_bar;
  dec.w_vul_hz = r.w_vul / kTwoPi;
  dec.margin_increase = dec.m_bar - dec.m_bar_set;
  dec.power_diff = dec.p_load - dec.p_set;
  return dec;
}

MarginScan margin_scan(const GridModel& grid, const ImpedanceProvider& provider,
                       const std::vector<double>& workloads, const MarginSearchConfig& inner) {
  if (workloads.empty()) throw InvalidArgument("margin scan needs at least one workload");
  MarginScan scan;
  for (double p : workloads) {
    try {
      const MarginReport r = safety_margin(grid, provider, p, inner);
      scan.points.push_back({p, r.m_bar, r.m_ssr, r.w_vul / kTwoPi});
    } catch (const std::exception& e) {
      scan.failures.push_back({p, e.what()});
    }
  }
  return scan;
}

std::vector<Basin> find_basins(const std::vector<ScanPoint>& scan) {
  std::vector<Basin> out;
  for (std::size_t i = 1; i + 1 < scan.size(); ++i) {
    const double m = scan[i].m_bar;
    if (!(m < scan[i - 1].m_bar && m < scan[i + 1].m_bar)) continue;
    Basin b{scan[i].p_load, m, m, m};
    for (std::size_t j = 0; j < i; ++j) b.left_peak = std::max(b.left_peak, scan[j].m_bar);
    for (std::size_t j = i + 1; j < scan.size(); ++j) b.right_peak = std::max(b.right_peak, scan[j].m_bar);
    out.push_back(b);
  }
  return out;
}

void write_decisions_csv(std::ostream& out, const std::vector<std::pair<double, ControlDecision>>& rows) {
  out << "l_grid_mh,p_set_w,p_load_w,w_vul_hz,margin_increase,power_diff_w\n";
  for (const auto& [l_grid, d] : rows) {
    out << format_double(l_grid * 1e3) << ',' << format_double(d.p_set) << ',' << format_double(d.p_load)
        << ',' << format_double(d.w_vul_hz) << ',' << format_double(d.margin_increase) << ','
        << format_double(d.power_diff) << '\n';
  }
}

}  // namespace ssrguard
