#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ssrguard/control.hpp"
#include "ssrguard/error.hpp"
#include "support.hpp"

using namespace ssrguard;
using cd = std::complex<double>;

namespace {

const double kWg = 2.0 * testing::kPi * 60.0;
const GridModel kGrid{0.1, 12e-3, kWg};

// Capacitive load resonating with the 12 mH grid near 30 Hz. Its damping
// resistance grows away from 2200 W, so the margin has a basin there.
cd basin_load(double w, double p) {
  const double c = 1.0 / (std::pow(2.0 * testing::kPi * 30.0, 2) * kGrid.l_grid);
  const double r = 0.3 + std::abs(p - 2200.0) / 400.0;
  return {r, -1.0 / (w * c)};
}

MarginSearchConfig quick_inner() {
  MarginSearchConfig m;
  m.coarse_points = 40;
  m.bo_evaluations = 6;
  m.candidates = 300;
  return m;
}

ControlConfig quick_control(double p_set, double beta) {
  ControlConfig c;
  c.p_set = p_set;
  c.beta = beta;
  c.outer_budget = 12;
  c.inner = quick_inner();
  return c;
}

double objective_at(double p, double p_set, double beta) {
  const MarginReport r = safety_margin(kGrid, basin_load, p, quick_inner());
  return r.m_bar - beta * (p - p_set) * (p - p_set);
}

}  // namespace

TEST_SUITE("control") {

TEST_CASE("decision never does worse than the setpoint and stays feasible") {
  for (double p_set : {900.0, 2100.0, 2500.0, 3500.0}) {
    for (double beta : {0.0, 5e-7, 1e-5}) {
      CAPTURE(p_set);
      CAPTURE(beta);
      const ControlConfig c = quick_control(p_set, beta);
      const ControlDecision d = preventive_control(kGrid, basin_load, c);
      CHECK(d.objective >= d.objective_set);
      CHECK(d.p_load >= c.p_min);
      CHECK(d.p_load <= c.p_max);
      CHECK(std::abs(d.p_load - p_set) <= c.max_deviation);
      CHECK(d.margin_increase == d.m_bar - d.m_bar_set);
      CHECK(d.power_diff == d.p_load - p_set);
      CHECK(d.objective_set == doctest::Approx(objective_at(p_set, p_set, beta)));
      CHECK(d.history.front().x == p_set);
      CHECK(d.history.size() == c.outer_budget);
    }
  }
}

TEST_CASE("huge penalty keeps the setpoint") {
  const ControlDecision d = preventive_control(kGrid, basin_load, quick_control(2300.0, 1.0));
  CHECK(std::abs(d.p_load - 2300.0) <= 1.0);
}

TEST_CASE("zero penalty picks the best margin in the window") {
  const ControlConfig c = quick_control(2400.0, 0.0);
  const ControlDecision d = preventive_control(kGrid, basin_load, c);
  double best = -1.0;
  for (double p = 1800.0; p <= 3000.0; p += 25.0) best = std::max(best, objective_at(p, 2400.0, 0.0));
  CHECK(d.m_bar >= best - 0.01 * best);
  CHECK(d.p_load > 2400.0);  // moving away from the basin bottom means uploading here
}

TEST_CASE("tiny deviation bound pins the workload") {
  ControlConfig c = quick_control(2000.0, 0.0);
  c.max_deviation = 0.1;
  const ControlDecision d = preventive_control(kGrid, basin_load, c);
  CHECK(std::abs(d.power_diff) <= 0.1);
}

TEST_CASE("larger penalty never moves the decision further") {
  double previous = std::numeric_limits<double>::infinity();
  for (double beta : {0.0, 1e-7, 1e-6, 1e-5, 1e-3}) {
    CAPTURE(beta);
    const ControlDecision d = preventive_control(kGrid, basin_load, quick_control(2000.0, beta));
    CHECK(std::abs(d.power_diff) <= previous + 1e-9);
    previous = std::abs(d.power_diff);
  }
}

TEST_CASE("decisions are reproducible") {
  const ControlConfig c = quick_control(2600.0, 5e-7);
  const ControlDecision a = preventive_control(kGrid, basin_load, c);
  const ControlDecision b = preventive_control(kGrid, basin_load, c);
  CHECK(a.history == b.history);
  CHECK(a.p_load == b.p_load);
}

TEST_CASE("invalid control settings") {
  ControlConfig c = quick_control(4000.0, 5e-7);
  CHECK_THROWS_AS(preventive_control(kGrid, basin_load, c), InvalidArgument);
  c.p_set = 2000.0;
  c.beta = -1.0;
  CHECK_THROWS_AS(preventive_control(kGrid, basin_load, c), InvalidArgument);
  c.beta = 0.0;
  c.max_deviation = 0.0;
  CHECK_THROWS_AS(preventive_control(kGrid, basin_load, c), InvalidArgument);
}

TEST_CASE("margin scan") {
  SUBCASE("single workload equals a direct margin") {
    const MarginScan s = margin_scan(kGrid, basin_load, {1700.0}, quick_inner());
    REQUIRE(s.points.size() == 1);
    CHECK(s.points[0].m_bar == safety_margin(kGrid, basin_load, 1700.0, quick_inner()).m_bar);
  }
  SUBCASE("workload-independent provider gives a flat curve") {
    const ImpedanceProvider flat = [](double w, double) { return basin_load(w, 1000.0); };
    const MarginScan s = margin_scan(kGrid, flat, {800.0, 1600.0, 2400.0, 3200.0}, quick_inner());
    for (const ScanPoint& p : s.points) CHECK(p.m_bar == s.points[0].m_bar);
  }
  SUBCASE("failures are listed, not dropped") {
    const ImpedanceProvider partial = [](double w, double p) -> cd {
      if (p == 1600.0) throw std::runtime_error("no data");
      return basin_load(w, p);
    };
    const MarginScan s = margin_scan(kGrid, partial, {800.0, 1600.0, 2400.0}, quick_inner());
    CHECK(s.points.size() == 2);
    REQUIRE(s.failures.size() == 1);
    CHECK(s.failures[0].p_load == 1600.0);
  }
  SUBCASE("the synthetic load has a single basin at 2200 W") {
    std::vector<double> grid;
    for (double p = 1000.0; p <= 3400.0; p += 200.0) grid.push_back(p);
    const auto basins = find_basins(margin_scan(kGrid, basin_load, grid, quick_inner()).points);
    REQUIRE(basins.size() == 1);
    CHECK(basins[0].p_bottom == 2200.0);
    CHECK(basins[0].left_peak > basins[0].m_bottom);
    CHECK(basins[0].right_peak > basins[0].m_bottom);
  }
}

TEST_CASE("basin detection on hand-made scans") {
  const auto scan = [](std::vector<double> m) {
    std::vector<ScanPoint> out;
    for (std::size_t i = 0; i < m.size(); ++i) out.push_back({800.0 + 100.0 * i, m[i], 0.0, 0.0});
    return out;
  };
  CHECK(find_basins(scan({1.0, 0.8, 0.6, 0.4})).empty());
  const auto v = find_basins(scan({0.5, 0.3, 0.1, 0.2, 0.6}));
  REQUIRE(v.size() == 1);
  CHECK(v[0].p_bottom == 1000.0);
  CHECK(v[0].left_peak == 0.5);
  CHECK(v[0].right_peak == 0.6);
  CHECK(find_basins(scan({0.5, 0.3, 0.3, 0.6})).empty());  // flat bottom is not strict
}

TEST_CASE("surrogate provider aggregates identical units") {
  SurrogateModel m({4}, 1);
  const ImpedanceProvider one = surrogate_provider(m, 1);
  const ImpedanceProvider five = surrogate_provider(m, 5);
  CHECK(five(300.0, 1500.0) == one(300.0, 1500.0) / 5.0);
  CHECK_THROWS_AS(surrogate_provider(m, 0), InvalidArgument);
}

TEST_CASE("decision report columns") {
  ControlDecision d;
  d.p_set = 2060.0;
  d.p_load = 1792.0;
  d.w_vul_hz = 33.5;
  d.margin_increase = 0.05;
  d.power_diff = -268.0;
  std::ostringstream out;
  write_decisions_csv(out, {{12e-3, d}});
  CHECK(out.str() ==
        "l_grid_mh,p_set_w,p_load_w,w_vul_hz,margin_increase,power_diff_w\n12,2060,1792,33.5,0.05,-268\n");
}

}  // TEST_SUITE
