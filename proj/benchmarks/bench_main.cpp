#include <cmath>
#include <numbers>
#include <vector>

#include <benchmark/benchmark.h>

#include "ssrguard/bayesopt.hpp"
#include "ssrguard/config.hpp"
#include "ssrguard/grid_stability.hpp"
#include "ssrguard/pfc_circuit.hpp"
#include "ssrguard/surrogate.hpp"
#include "ssrguard/sweep.hpp"

using namespace ssrguard;

namespace {

const PfcParams& params() {
  static const PfcParams p = load_pfc_params(SSRGUARD_SOURCE_DIR "/configs/pfc_3600w.json");
  return p;
}

const PfcState& settled_state() {
  static const PfcState s = settle(params(), SourceSpec::fundamental(params()), 2000.0).state;
  return s;
}

void BM_Derivative(benchmark::State& state) {
  const PfcState x = settled_state();
  double v = 100.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(derivative(x, params(), v, 2000.0));
    v = -v;
  }
}
BENCHMARK(BM_Derivative);

// One fundamental period of RK4 at the default step.
void BM_AdvanceOneCycle(benchmark::State& state) {
  const SourceSpec src = SourceSpec::fundamental(params());
  const double dt = default_time_step(params());
  for (auto _ : state) benchmark::DoNotOptimize(advance(settled_state(), params(), src, 2000.0, 2000, dt));
  state.SetItemsProcessed(state.iterations() * 2000);
}
BENCHMARK(BM_AdvanceOneCycle)->Unit(benchmark::kMillisecond);

void BM_SingleBinDft(benchmark::State& state) {
  const double dt = 1.0 / 120000.0;
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::cos(2.0 * std::numbers::pi * 35.0 * k * dt + 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(single_bin_dft(x, dt, 35.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SingleBinDft)->Arg(120000)->Arg(240000);

void BM_MinimizeTwoNotch(benchmark::State& state) {
  const Objective f = [](double x) {
    return 1.0 - 0.8 * std::exp(-(x - 1.3) * (x - 1.3) / 0.04) - 0.9 * std::exp(-(x - 3.7) * (x - 3.7) / 0.01);
  };
  BoOptions o;
  o.budget = static_cast<std::size_t>(state.range(0));
  o.init_probes = uniform_probes({0.0, 5.0}, 20);
  for (auto _ : state) benchmark::DoNotOptimize(minimize(f, {0.0, 5.0}, o));
}
BENCHMARK(BM_MinimizeTwoNotch)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_SurrogatePredict(benchmark::State& state) {
  const SurrogateModel m({16, 16, 16, 16}, 0);
  double w = 100.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.predict(w, 2000.0));
    w = w < 700.0 ? w + 1.0 : 100.0;
  }
}
BENCHMARK(BM_SurrogatePredict);

void BM_SafetyMargin(benchmark::State& state) {
  const SurrogateModel m({16, 16, 16, 16}, 0);
  const ImpedanceProvider z = [&](double w, double p) { return m.predict(w, p) + std::complex<double>(5.0, 0.0); };
  const GridModel g{0.1, 12e-3, params().w_g};
  for (auto _ : state) benchmark::DoNotOptimize(safety_margin(g, z, 2000.0));
}
BENCHMARK(BM_SafetyMargin)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
