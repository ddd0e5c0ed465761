#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "run_config.hpp"
#include "ssrguard/analysis.hpp"
#include "ssrguard/control.hpp"
#include "ssrguard/error.hpp"
#include "ssrguard/grid_stability.hpp"
#include "ssrguard/io.hpp"
#include "ssrguard/surrogate.hpp"
#include "ssrguard/sweep.hpp"

namespace fs = std::filesystem;
using namespace ssrguard;
using cli::RunConfig;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

struct Common {
  std::string config_path = "configs/default_run.json";
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "run configuration (JSON)")->capture_default_str();
  cmd->add_option("-o,--out", c.out_dir, "output directory (overrides SSRGUARD_OUT_DIR and the config)");
}

// Writes `name` under `dir` with the provenance header, via a temporary file.
fs::path emit(const fs::path& dir, const std::string& name, const RunConfig& config,
              const std::string& command, const std::function<void(std::ostream&)>& body) {
  const fs::path path = dir / name;
  write_file_atomic(path, [&](std::ostream& out) {
    std::istringstream lines(cli::provenance_comment(config, command));
    for (std::string l; std::getline(lines, l);) out << "# " << l << '\n';
    body(out);
  });
  return path;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path dataset_path(const RunConfig& config, const fs::path& out, const std::optional<std::string>& flag) {
  return flag ? fs::path(*flag) : out / config.dataset_file;
}

fs::path model_path(const RunConfig& config, const fs::path& out, const std::optional<std::string>& flag) {
  return flag ? fs::path(*flag) : out / config.model_file;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) {
    throw IoError(std::string(what) + " '" + p.string() + "' not found; run the stage that produces it first");
  }
}

struct OracleOutcome {
  double max_mag_rel = 0.0;
  double max_phase_deg = 0.0;
  std::size_t points = 0;
  std::size_t failures = 0;
  std::vector<SweepFailure> failed;
};

OracleOutcome run_oracle(const SeriesBranchSubject& subject, const RunConfig& config,
                         const std::vector<double>& freqs) {
  const SweepResult r = sweep_subject(subject, config.circuit, freqs, config.sweep);
  OracleOutcome o;
  o.points = r.dataset.points.size();
  o.failures = r.failures.size();
  o.failed = r.failures;
  for (const ImpedancePoint& p : r.dataset.points) {
    const std::complex<double> z = subject.analytic_impedance(p.w_hm());
    o.max_mag_rel = std::max(o.max_mag_rel, std::abs(p.magnitude() / std::abs(z) - 1.0));
    double dp = std::abs(p.phase() - std::arg(z)) * 180.0 / std::numbers::pi;
    if (dp > 180.0) dp = 360.0 - dp;
    o.max_phase_deg = std::max(o.max_phase_deg, dp);
  }
  return o;
}

bool report_oracle(const std::string& label, const OracleOutcome& o) {
  const bool ok = o.failures == 0 && o.max_mag_rel <= 0.01 && o.max_phase_deg <= 1.0;
  std::printf("%-28s points=%zu failures=%zu max|dZ|/|Z|=%.3e max dphase=%.3e deg  %s\n", label.c_str(),
              o.points, o.failures, o.max_mag_rel, o.max_phase_deg, ok ? "PASS" : "FAIL");
  for (const SweepFailure& f : o.failed) std::fprintf(stderr, "  failed f=%g Hz: %s\n", f.f_hz, f.message.c_str());
  return ok;
}

int cmd_sweep(const Common& common, const std::optional<std::string>& oracle, double r, double l, double c) {
  const RunConfig config = cli::load_run_config(common.config_path);
  if (oracle) {
    std::optional<SeriesBranchSubject> subject;
    if (*oracle == "rl") {
      subject = SeriesBranchSubject::rl(r, l);
    } else if (*oracle == "rc") {
      subject = SeriesBranchSubject::rc(r, c);
    } else {
      throw InvalidArgument("--oracle must be 'rl' or 'rc'");
    }
    const bool ok = report_oracle(*oracle + " oracle", run_oracle(*subject, config, config.frequencies_hz));
    return ok ? 0 : kExitError;
  }

  const fs::path out = cli::resolve_output_dir(config, common.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  SweepResult res = generate_dataset(config.circuit, config.workloads_w, config.frequencies_hz, config.sweep);
  res.dataset.meta.provenance = "config_sha256 " + config.digest;
  const fs::path csv = out / config.dataset_file;
  save_dataset(res.dataset, csv, cli::provenance_comment(config, "sweep"));
  if (!res.failures.empty()) {
    emit(out, "sweep_failures.csv", config, "sweep", [&](std::ostream& os) {
      os << "p_load_w,f_hz,message\n";
      for (const SweepFailure& f : res.failures) {
        std::string msg = f.message;
        for (char& ch : msg) {
          if (ch == ',' || ch == '\n') ch = ';';
        }
        os << format_double(f.p_load) << ',' << format_double(f.f_hz) << ',' << msg << '\n';
      }
    });
  }
  std::printf("sweep: %zu points, %zu failures, %.1f s wall -> %s\n", res.dataset.points.size(),
              res.failures.size(), seconds_since(t0), csv.string().c_str());
  for (const SweepFailure& f : res.failures) {
    std::fprintf(stderr, "  failed P=%g W f=%g Hz: %s\n", f.p_load, f.f_hz, f.message.c_str());
  }
  return res.failures.empty() ? 0 : kExitPartial;
}

int cmd_oracle_check(const Common& common, double step) {
  const RunConfig config = cli::load_run_config(common.config_path);
  const double f_g = config.circuit.w_g / (2.0 * std::numbers::pi);
  const std::vector<double> freqs = arithmetic_grid(step, 2.0 * f_g - step, step, f_g);
  bool ok = report_oracle("RL (1 ohm, 10 mH)", run_oracle(SeriesBranchSubject::rl(1.0, 0.01), config, freqs));
  ok = report_oracle("RC (10 ohm, 1 mF)", run_oracle(SeriesBranchSubject::rc(10.0, 1e-3), config, freqs)) && ok;
  return ok ? 0 : kExitError;
}

int cmd_train(const Common& common, const std::optional<std::string>& dataset_flag) {
  const RunConfig config = cli::load_run_config(common.config_path);
  const fs::path out = cli::resolve_output_dir(config, common.out_dir);
  const fs::path ds_path = dataset_path(config, out, dataset_flag);
  require_file(ds_path, "dataset");
  const ImpedanceDataset ds = load_dataset(ds_path);
  const auto [train_set, test_set] = split_dataset(ds.points, config.train_fraction, config.split_seed);
  if (test_set.empty()) throw InvalidArgument("dataset too small: the test split is empty");

  std::vector<std::pair<std::string, RegressionMetrics>> rows;
  std::optional<SurrogateModel> primary;
  for (const std::vector<int>& hidden : {config.training.hidden, config.compare_hidden}) {
    TrainingConfig tc = config.training;
    tc.hidden = hidden;
    const TrainingResult tr = train(train_set, tc);
    RegressionMetrics m = evaluate(tr.model, test_set);
    m.train_time_s = tr.train_time_s;
    std::string name = "dense";
    for (int h : hidden) name += "-" + std::to_string(h);
    rows.emplace_back(name, m);
    if (!primary) primary = tr.model;
    std::printf("%-22s test MSE %.4g ohm^2 (normalized %.4g)  sMAPE %.4f  train %.1f s  infer %.4f ms\n",
                name.c_str(), m.mse, m.mse_normalized, m.smape, m.train_time_s, m.inference_ms);
  }
  const fs::path mp = out / config.model_file;
  primary->save_file(mp, cli::provenance_comment(config, "train"));
  emit(out, "metrics.csv", config, "train", [&](std::ostream& os) { write_metrics_csv(os, rows, false); });
  emit(out, "timings.csv", config, "train", [&](std::ostream& os) { write_metrics_csv(os, rows, true); });
  std::printf("model -> %s\n", mp.string().c_str());
  return 0;
}

int cmd_assess(const Common& common, const std::optional<std::string>& model_flag,
               std::optional<double> threshold) {
  const RunConfig config = cli::load_run_config(common.config_path);
  const fs::path out = cli::resolve_output_dir(config, common.out_dir);
  const fs::path mp = model_path(config, out, model_flag);
  require_file(mp, "model");
  const SurrogateModel model = SurrogateModel::load_file(mp);
  const double thr = threshold.value_or(config.threshold);
  const MarginMatrix m = margin_matrix(config.r_grid, config.l_grid_values, config.w_g,
                                       surrogate_provider(model, config.n_converters),
                                       config.assess_workloads_w, config.margin);
  emit(out, "margin_matrix.csv", config, "assess", [&](std::ostream& os) { write_margin_matrix_csv(os, m); });
  emit(out, "margins.csv", config, "assess", [&](std::ostream& os) { write_margin_reports_csv(os, m, thr); });
  std::size_t risky = 0;
  for (std::size_t i = 0; i < m.cells.size(); ++i) {
    for (const MarginReport& r : m.cells[i]) {
      const WarningVerdict v = early_warning(r, thr);
      std::printf("L_grid %5.1f mH  P %7.1f W  M_bar %.4f  w_vul %6.2f Hz  %s\n", m.l_grid_values[i] * 1e3,
                  r.p_load, r.m_bar, r.w_vul / (2.0 * std::numbers::pi), to_string(v.verdict).c_str());
      if (v.verdict == Verdict::Risky) ++risky;
    }
  }
  std::printf("%zu risky cell(s) at threshold %g\n", risky, thr);
  return 0;
}

int cmd_control(const Common& common, const std::optional<std::string>& model_flag,
                std::optional<double> beta, std::optional<double> deviation) {
  RunConfig config = cli::load_run_config(common.config_path);
  if (beta) config.control.beta = *beta;
  if (deviation) config.control.max_deviation = *deviation;
  const fs::path out = cli::resolve_output_dir(config, common.out_dir);
  const fs::path mp = model_path(config, out, model_flag);
  require_file(mp, "model");
  const SurrogateModel model = SurrogateModel::load_file(mp);
  const ImpedanceProvider provider = surrogate_provider(model, config.n_converters);

  std::vector<std::pair<double, ControlDecision>> rows;
  for (const cli::ControlScenario& s : config.scenarios) {
    ControlConfig cc = config.control;
    cc.p_set = s.p_set;
    try {
      rows.emplace_back(s.l_grid, preventive_control(config.grid(s.l_grid), provider, cc));
    } catch (const std::exception& e) {
      throw Error("scenario (L_grid=" + format_double(s.l_grid * 1e3) + " mH, P_set=" + format_double(s.p_set) +
                  " W): " + e.what());
    }
    const ControlDecision& d = rows.back().second;
    std::printf("L_grid %5.1f mH  P_set %7.1f W -> P_load %8.2f W  w_vul %6.2f Hz  margin +%.4f  diff %+8.2f W\n",
                s.l_grid * 1e3, d.p_set, d.p_load, d.w_vul_hz, d.margin_increase, d.power_diff);
  }
  emit(out, "decisions.csv", config, "control", [&](std::ostream& os) { write_decisions_csv(os, rows); });
  return 0;
}

int cmd_analyze(const Common& common, const std::string& kind, const std::vector<double>& workloads_flag,
                const std::optional<std::string>& dataset_flag, const std::optional<std::string>& model_flag,
                std::optional<double> l_grid_mh) {
  const RunConfig config = cli::load_run_config(common.config_path);
  const fs::path out = cli::resolve_output_dir(config, common.out_dir);
  const std::string cmd = "analyze " + kind;
  const double l_grid = l_grid_mh ? *l_grid_mh * 1e-3 : config.demo_l_grid;

  if (kind == "bode" || kind == "nyquist" || kind == "cluster") {
    const fs::path ds_path = dataset_path(config, out, dataset_flag);
    require_file(ds_path, "dataset");
    const ImpedanceDataset ds = load_dataset(ds_path);
    if (kind == "cluster") {
      const auto vectors = impedance_vectors(ds, parse_vector_form(config.vector_form));
      const Dendrogram dg = hierarchical_cluster(vectors, parse_linkage(config.linkage), parse_metric(config.metric));
      const fs::path p = emit(out, "dendrogram.csv", config, cmd, [&](std::ostream& os) { write_dendrogram_csv(os, dg); });
      const auto [a, b] = dg.top_split();
      const auto describe = [&](const std::vector<std::size_t>& idx) {
        return format_double(vectors[idx.front()].p_load) + ".." + format_double(vectors[idx.back()].p_load) +
               " W (" + std::to_string(idx.size()) + " workloads)";
      };
      std::printf("top-level split: %s | %s\n%zu merges -> %s\n", describe(a).c_str(), describe(b).c_str(),
                  dg.merges.size(), p.string().c_str());
      return 0;
    }
    const std::vector<double> workloads = workloads_flag.empty() ? config.bode_workloads_w : workloads_flag;
    for (double w : workloads) {
      const auto curve = ds.curve(w);
      if (curve.empty()) throw InvalidArgument("dataset has no points at workload " + format_double(w) + " W");
      const std::string name = kind + "_" + format_double(w) + "w.csv";
      const fs::path p = emit(out, name, config, cmd, [&](std::ostream& os) {
        if (kind == "bode") {
          write_bode_csv(os, curve);
        } else {
          write_nyquist_csv(os, curve);
        }
      });
      const auto dips = detect_dips(curve, 40.0, 80.0);
      std::printf("%s: %zu points, dips in [40, 80] Hz:", p.string().c_str(), curve.size());
      for (double f : dips) std::printf(" %g", f);
      std::printf("\n");
    }
    return 0;
  }

  if (kind == "margin_demo" || kind == "margin_scan") {
    const fs::path mp = model_path(config, out, model_flag);
    require_file(mp, "model");
    const SurrogateModel model = SurrogateModel::load_file(mp);
    const ImpedanceProvider provider = surrogate_provider(model, config.n_converters);
    const GridModel grid = config.grid(l_grid);
    if (kind == "margin_demo") {
      const double p_load = workloads_flag.empty() ? config.demo_workload_w : workloads_flag.front();
      const MarginReport r = safety_margin(grid, provider, p_load, config.margin);
      const fs::path p = emit(out, "margin_demo.csv", config, cmd, [&](std::ostream& os) {
        write_margin_demo_csv(os, grid, provider, r, config.frequencies_hz);
      });
      std::printf("M_SSR %.4f at %.2f Hz, M_bar %.4f -> %s\n", r.m_ssr, r.w_vul / (2.0 * std::numbers::pi),
                  r.m_bar, p.string().c_str());
      return 0;
    }
    const std::vector<double> workloads = workloads_flag.empty() ? config.scan_workloads_w : workloads_flag;
    const MarginScan scan = margin_scan(grid, provider, workloads, config.margin);
    const fs::path p = emit(out, "margin_scan.csv", config, cmd, [&](std::ostream& os) { write_margin_scan_csv(os, scan.points); });
    for (const Basin& b : find_basins(scan.points)) {
      std::printf("basin at %.1f W (M_bar %.4f) between peaks %.4f / %.4f\n", b.p_bottom, b.m_bottom,
                  b.left_peak, b.right_peak);
    }
    for (const ScanFailure& f : scan.failures) std::fprintf(stderr, "  failed P=%g W: %s\n", f.p_load, f.message.c_str());
    std::printf("%zu points -> %s\n", scan.points.size(), p.string().c_str());
    return scan.failures.empty() ? 0 : kExitPartial;
  }
  throw CLI::ValidationError("kind", "unknown analysis kind '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssrguard: workload-dependent PFC impedance, SSR margins and preventive control"};
  app.require_subcommand(1);
  Common common;

  auto* sweep = app.add_subcommand("sweep", "two-tone impedance sweep over the configured grids");
  add_common(sweep, common);
  std::optional<std::string> oracle;
  double r_ohm = 1.0, l_h = 0.01, c_f = 1e-3;
  sweep->add_option("--oracle", oracle, "substitute a linear branch (rl | rc) and report the deviation");
  sweep->add_option("--r", r_ohm, "oracle resistance [ohm]")->capture_default_str();
  sweep->add_option("--l", l_h, "oracle inductance [H]")->capture_default_str();
  sweep->add_option("--cap", c_f, "oracle capacitance [F]")->capture_default_str();

  auto* oracle_check = app.add_subcommand("oracle-check", "sweep RL and RC oracles against their analytic impedance");
  add_common(oracle_check, common);
  double oracle_step = 0.5;
  oracle_check->add_option("--step", oracle_step, "frequency step [Hz]")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "split, train and evaluate the impedance surrogate");
  add_common(train_cmd, common);
  std::optional<std::string> dataset_flag;
  train_cmd->add_option("--dataset", dataset_flag, "dataset CSV (default: <out>/<sweep.dataset>)");

  auto* assess = app.add_subcommand("assess", "margin matrix and early warnings");
  add_common(assess, common);
  std::optional<std::string> model_flag;
  std::optional<double> threshold;
  assess->add_option("--model", model_flag, "model file (default: <out>/<surrogate.model>)");
  assess->add_option("--threshold", threshold, "early-warning threshold on the normalized margin");

  auto* control = app.add_subcommand("control", "preventive workload decisions per scenario");
  add_common(control, common);
  std::optional<double> beta, deviation;
  control->add_option("--model", model_flag, "model file");
  control->add_option("--beta", beta, "penalty weight [1/W^2]");
  control->add_option("--max-deviation", deviation, "allowed |P_load - P_set| [W]");

  auto* analyze = app.add_subcommand("analyze", "plot-ready exports: bode, nyquist, cluster, margin_demo, margin_scan");
  add_common(analyze, common);
  std::string kind;
  std::vector<double> workloads;
  std::optional<double> l_grid_mh;
  analyze->add_option("kind", kind, "analysis kind")
      ->required()
      ->check(CLI::IsMember({"bode", "nyquist", "cluster", "margin_demo", "margin_scan"}));
  analyze->add_option("--workload", workloads, "workload(s) [W]");
  analyze->add_option("--dataset", dataset_flag, "dataset CSV");
  analyze->add_option("--model", model_flag, "model file");
  analyze->add_option("--l-grid-mh", l_grid_mh, "grid inductance for margin kinds [mH]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 has its own code per parse error; callers only need "usage".
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sweep) return cmd_sweep(common, oracle, r_ohm, l_h, c_f);
    if (*oracle_check) return cmd_oracle_check(common, oracle_step);
    if (*train_cmd) return cmd_train(common, dataset_flag);
    if (*assess) return cmd_assess(common, model_flag, threshold);
    if (*control) return cmd_control(common, model_flag, beta, deviation);
    if (*analyze) return cmd_analyze(common, kind, workloads, dataset_flag, model_flag, l_grid_mh);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
