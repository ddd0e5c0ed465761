#include "ssrguard/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Index of f on the grid of spacing `res`, or an error when f is not on it.
long long grid_index(double f_hz, double res, const char* what) {
  const double q = f_hz / res;
  const double n = std::round(q);
  if (std::abs(q - n) > 1e-7 * std::max(1.0, std::abs(q))) {
    std::ostringstream msg;
    msg << what << " " << format_double(f_hz) << " Hz is not on the " << format_double(res)
        << " Hz sweep grid; snap it to a multiple of the grid resolution";
    throw InvalidArgument(msg.str());
  }
  return static_cast<long long>(n);
}

// Hz value exactly on the grid for an angular frequency that was derived from it.
double snapped_hz(double w, double res) {
  return static_cast<double>(grid_index(w / kTwoPi, res, "frequency")) * res;
}

void check_tone(double f_hm, double f_g) {
  if (!(f_hm > 0.0 && f_hm < 2.0 * f_g) || f_hm == f_g) {
    throw InvalidArgument("tone frequency " + format_double(f_hm) + " Hz must lie in (0, " +
                          format_double(2.0 * f_g) + ") Hz and differ from the fundamental");
  }
}

unsigned resolve_workers(unsigned requested, std::size_t tasks) {
  unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

// Runs body(i) for i in [0, count) on `workers` threads. Exceptions must be
// handled inside body.
template <typename Body>
void parallel_for(std::size_t count, unsigned workers, Body body) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
}

}  // namespace

double PhasorMeasurement::phase() const {
  const double a = std::arg(value);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

double ImpedancePoint::w_hm() const { return kTwoPi * f_hz; }

ImpedancePoint aggregate_parallel(const ImpedancePoint& point, std::size_t n_converters) {
  if (n_converters == 0) throw InvalidArgument("aggregate_parallel: converter count must be >= 1");
  ImpedancePoint out = point;
  const double n = static_cast<double>(n_converters);
  out.re = point.re / n;
  out.im = point.im / n;
  return out;
}

double SweepConfig::min_duration() const { return std::max(1.0, 1.0 / frequency_accuracy_hz); }

void SweepConfig::validate() const {
  if (!(injection_fraction > 0.0 && injection_fraction <= 0.1)) {
    throw InvalidArgument("sweep.injection_fraction must lie in (0, 0.1]");
  }
  if (!std::isfinite(theta0)) throw InvalidArgument("sweep.theta0 must be finite");
  if (!(grid_resolution_hz > 0.0)) throw InvalidArgument("sweep.grid_resolution_hz must be > 0");
  if (!(frequency_accuracy_hz > 0.0)) throw InvalidArgument("sweep.frequency_accuracy_hz must be > 0");
  if (!(tone_settle_time >= 0.0)) throw InvalidArgument("sweep.tone_settle_time must be >= 0");
  if (!(dt >= 0.0)) throw InvalidArgument("sweep.dt must be >= 0");
  if (!(current_floor >= 0.0)) throw InvalidArgument("sweep.current_floor must be >= 0");
}

std::size_t coherent_window(double w_g, double w_hm, double dt, double min_duration,
                            double grid_resolution_hz) {
  if (!(dt > 0.0) || !(min_duration > 0.0) || !(grid_resolution_hz > 0.0)) {
    throw InvalidArgument("coherent_window: dt, min_duration and grid resolution must be > 0");
  }
  const long long ng = grid_index(w_g / kTwoPi, grid_resolution_hz, "fundamental");
  const long long nh = grid_index(w_hm / kTwoPi, grid_resolution_hz, "tone");
  if (ng <= 0 || nh <= 0) throw InvalidArgument("coherent_window: frequencies must be > 0");
  if (ng == nh) throw InvalidArgument("coherent_window: tone coincides with the fundamental");

  // Both tones repeat every 1 / (gcd * res) seconds.
  const double common_period = 1.0 / (static_cast<double>(std::gcd(ng, nh)) * grid_resolution_hz);
  const double periods = std::ceil(min_duration / common_period - 1e-9);
  const double span = periods * common_period;
  const double k = std::round(span / dt);
  if (std::abs(k * dt - span) > 1e-9 * span) {
    throw InvalidArgument("coherent_window: time step " + format_double(dt) +
                          " s does not divide the common period " + format_double(common_period) +
                          " s");
  }
  return static_cast<std::size_t>(k);
}

PhasorMeasurement single_bin_dft(std::span<const double> samples, double dt, double f_hz,
                                 double t0) {
  if (samples.empty() || !(dt > 0.0) || !(f_hz > 0.0)) {
    throw InvalidArgument("single_bin_dft: need samples, dt > 0 and f > 0");
  }
  const double n = static_cast<double>(samples.size());
  const double cycles = f_hz * n * dt;
  if (std::abs(cycles - std::round(cycles)) > 1e-6 || std::round(cycles) < 1.0) {
    throw InvalidArgument("single_bin_dft: record of " + format_double(n * dt) + " s holds " +
                          format_double(cycles) + " periods of " + format_double(f_hz) +
                          " Hz, not a whole number");
  }
  const double w = kTwoPi * f_hz;
  double re = 0.0;
  double im = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double phase = w * (t0 + static_cast<double>(k) * dt);
    re += samples[k] * std::cos(phase);
    im -= samples[k] * std::sin(phase);
  }
  return {w, std::complex<double>(re, im) * (2.0 / n)};
}

PfcSubject::PfcSubject(PfcParams params, double p_load, const SweepConfig& config)
    : params_(std::move(params)), p_load_(p_load) {
  SettleOptions opts = config.settle;
  if (opts.dt <= 0.0) opts.dt = config.dt;
  settled_ = settle(params_, SourceSpec::fundamental(params_, config.theta0), p_load_, opts);
}

CurrentRecord PfcSubject::respond(const SourceSpec& source, double dt, std::size_t count,
                                  double pre_roll) const {
  if (count < 2) throw InvalidArgument("record needs at least two samples");
  // The settled state sits on a whole number of fundamental cycles, so time
  // restarts at zero without a phase jump in the fundamental.
  const auto pre_steps = static_cast<std::size_t>(std::llround(pre_roll / dt));
  const PfcState start = advance(settled_.state, params_, source, p_load_, pre_steps, dt, 0.0);
  const double t0 = static_cast<double>(pre_steps) * dt;
  const Trajectory traj =
      integrate(start, params_, source, p_load_, static_cast<double>(count - 1) * dt, dt, t0);
  return {t0, dt, extract_input_current(traj)};
}

SeriesBranchSubject SeriesBranchSubject::rl(double r_ohm, double l_h) {
  if (!(r_ohm > 0.0) || !(l_h > 0.0)) throw InvalidArgument("RL oracle needs R > 0 and L > 0");
  return {Kind::RL, r_ohm, l_h};
}

SeriesBranchSubject SeriesBranchSubject::rc(double r_ohm, double c_f) {
  if (!(r_ohm > 0.0) || !(c_f > 0.0)) throw InvalidArgument("RC oracle needs R > 0 and C > 0");
  return {Kind::RC, r_ohm, c_f};
}

std::complex<double> SeriesBranchSubject::analytic_impedance(double w) const {
  if (kind_ == Kind::RL) return {r_, w * x_};
  return {r_, -1.0 / (w * x_)};
}

CurrentRecord SeriesBranchSubject::respond(const SourceSpec& source, double dt, std::size_t count,
                                           double pre_roll) const {
  if (count < 2) throw InvalidArgument("record needs at least two samples");
  source.validate();
  // Single state: inductor current (RL) or capacitor voltage (RC).
  auto rate = [&](double y, double t) {
    const double v = two_tone_voltage(t, source);
    if (kind_ == Kind::RL) return (v - r_ * y) / x_;
    return (v - y) / (r_ * x_);
  };
  auto current = [&](double y, double t) {
    if (kind_ == Kind::RL) return y;
    return (two_tone_voltage(t, source) - y) / r_;
  };

  // Start on the fundamental's periodic steady state, as the converter does.
  const std::complex<double> v_g = std::polar(source.v_peak, source.theta0);
  const std::complex<double> i_g = v_g / analytic_impedance(source.w_g);
  double y = kind_ == Kind::RL ? i_g.real() : (v_g - r_ * i_g).real();

  const auto pre_steps = static_cast<std::size_t>(std::llround(pre_roll / dt));
  const std::size_t total = pre_steps + count;
  CurrentRecord rec{static_cast<double>(pre_steps) * dt, dt, {}};
  rec.samples.reserve(count);
  for (std::size_t k = 0; k < total; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k >= pre_steps) rec.samples.push_back(current(y, t));
    if (k + 1 == total) break;
    const double k1 = rate(y, t);
    const double k2 = rate(y + 0.5 * dt * k1, t + 0.5 * dt);
    const double k3 = rate(y + 0.5 * dt * k2, t + 0.5 * dt);
    const double k4 = rate(y + dt * k3, t + dt);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rec;
}

ImpedancePoint measure_impedance(const ImpedanceSubject& subject, const PfcParams& params,
                                 double w_hm, const SweepConfig& config) {
  config.validate();
  const double f_hm = snapped_hz(w_hm, config.grid_resolution_hz);
  check_tone(f_hm, params.w_g / kTwoPi);
  const double dt = config.dt > 0.0 ? config.dt : default_time_step(params);

  SourceSpec source = SourceSpec::fundamental(params, config.theta0);
  source.dv_hm = config.injection_fraction * params.v_peak();
  source.w_hm = kTwoPi * f_hm;

  const std::size_t k =
      coherent_window(params.w_g, source.w_hm, dt, config.min_duration(), config.grid_resolution_hz);
  const CurrentRecord rec = subject.respond(source, dt, k, config.tone_settle_time);
  const PhasorMeasurement i_hm = single_bin_dft(rec.samples, rec.dt, f_hm, rec.t0);
  if (!(i_hm.magnitude() > config.current_floor)) {
    throw Error("harmonic current " + format_double(i_hm.magnitude()) + " A at " +
                format_double(f_hm) + " Hz is below the measurement floor; point unmeasurable");
  }
  const std::complex<double> z = source.dv_hm / i_hm.value;
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw Error("non-finite impedance at " + format_double(f_hm) + " Hz");
  }
  return {f_hm, subject.workload(), z.real(), z.imag()};
}

ImpedancePoint measure_impedance(const PfcParams& params, double p_load, double w_hm,
                                 const SweepConfig& config) {
  const PfcSubject subject(params, p_load, config);
  return measure_impedance(subject, params, w_hm, config);
}

void ImpedanceDataset::validate() const {
  const std::set<double> workloads(meta.workloads_w.begin(), meta.workloads_w.end());
  const std::set<double> freqs(meta.frequencies_hz.begin(), meta.frequencies_hz.end());
  const double f_g = meta.w_g / kTwoPi;
  std::set<std::pair<double, double>> seen;
  for (const ImpedancePoint& p : points) {
    const std::string where =
        "point (P=" + format_double(p.p_load) + " W, f=" + format_double(p.f_hz) + " Hz)";
    if (!std::isfinite(p.re) || !std::isfinite(p.im)) throw InvalidArgument(where + ": non-finite Z");
    if (!seen.emplace(p.p_load, p.f_hz).second) throw InvalidArgument(where + ": duplicate");
    if (!workloads.contains(p.p_load)) throw InvalidArgument(where + ": workload not in metadata grid");
    if (!freqs.contains(p.f_hz)) throw InvalidArgument(where + ": frequency not in metadata grid");
    if (meta.w_g > 0.0) check_tone(p.f_hz, f_g);
  }
}

std::vector<ImpedancePoint> ImpedanceDataset::curve(double p_load) const {
  std::vector<ImpedancePoint> out;
  for (const ImpedancePoint& p : points) {
    if (p.p_load == p_load) out.push_back(p);
  }
  std::ranges::sort(out, {}, &ImpedancePoint::f_hz);
  return out;
}

namespace {

SweepMetadata make_metadata(const PfcParams& params, const std::vector<double>& workloads,
                            const std::vector<double>& freqs, const SweepConfig& config) {
  SweepMetadata m;
  m.workloads_w = workloads;
  m.frequencies_hz = freqs;
  m.injection_fraction = config.injection_fraction;
  m.theta0 = config.theta0;
  m.grid_resolution_hz = config.grid_resolution_hz;
  m.min_record_s = config.min_duration();
  m.tone_settle_time_s = config.tone_settle_time;
  m.dt_s = config.dt > 0.0 ? config.dt : default_time_step(params);
  m.w_g = params.w_g;
  return m;
}

void check_grids(const PfcParams& params, const std::vector<double>& workloads,
                 const std::vector<double>& freqs, const SweepConfig& config) {
  if (workloads.empty() || freqs.empty()) throw InvalidArgument("sweep grids must be non-empty");
  for (double p : workloads) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("workloads must be finite and >= 0");
  }
  if (std::set<double>(workloads.begin(), workloads.end()).size() != workloads.size() ||
      std::set<double>(freqs.begin(), freqs.end()).size() != freqs.size()) {
    throw InvalidArgument("sweep grids must not contain duplicates");
  }
  for (double f : freqs) {
    grid_index(f, config.grid_resolution_hz, "frequency");
    check_tone(f, params.w_g / kTwoPi);
  }
}

}  // namespace

SweepResult generate_dataset(const PfcParams& params, const std::vector<double>& workloads_w,
                             const std::vector<double>& frequencies_hz, const SweepConfig& config) {
  params.validate();
  config.validate();
  check_grids(params, workloads_w, frequencies_hz, config);

  // Settle once per workload, then fan out individual points.
  std::vector<std::unique_ptr<PfcSubject>> subjects(workloads_w.size());
  std::vector<std::string> settle_errors(workloads_w.size());
  parallel_for(workloads_w.size(), resolve_workers(config.workers, workloads_w.size()),
               [&](std::size_t i) {
                 try {
                   subjects[i] = std::make_unique<PfcSubject>(params, workloads_w[i], config);
                 } catch (const std::exception& e) {
                   settle_errors[i] = e.what();
                 }
               });

  const std::size_t nf = frequencies_hz.size();
  const std::size_t total = workloads_w.size() * nf;
  std::vector<std::optional<ImpedancePoint>> points(total);
  std::vector<std::string> errors(total);
  parallel_for(total, resolve_workers(config.workers, total), [&](std::size_t idx) {
    const std::size_t wi = idx / nf;
    if (!subjects[wi]) {
      errors[idx] = "settle failed: " + settle_errors[wi];
      return;
    }
    try {
      points[idx] = measure_impedance(*subjects[wi], params, kTwoPi * frequencies_hz[idx % nf], config);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  });

  SweepResult result;
  result.dataset.meta = make_metadata(params, workloads_w, frequencies_hz, config);
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (points[idx]) {
      // Keep the grid values bit-exact regardless of the rad/s round trip.
      points[idx]->f_hz = frequencies_hz[idx % nf];
      result.dataset.points.push_back(*points[idx]);
    } else {
      result.failures.push_back({workloads_w[idx / nf], frequencies_hz[idx % nf], errors[idx]});
    }
  }
  return result;
}

SweepResult sweep_subject(const ImpedanceSubject& subject, const PfcParams& params,
                          const std::vector<double>& frequencies_hz, const SweepConfig& config) {
  config.validate();
  check_grids(params, {subject.workload()}, frequencies_hz, config);
  std::vector<std::optional<ImpedancePoint>> points(frequencies_hz.size());
  std::vector<std::string> errors(frequencies_hz.size());
  parallel_for(frequencies_hz.size(), resolve_workers(config.workers, frequencies_hz.size()),
               [&](std::size_t i) {
                 try {
                   points[i] = measure_impedance(subject, params, kTwoPi * frequencies_hz[i], config);
                   points[i]->f_hz = frequencies_hz[i];
                 } catch (const std::exception& e) {
                   errors[i] = e.what();
                 }
               });
  SweepResult result;
  result.dataset.meta = make_metadata(params, {subject.workload()}, frequencies_hz, config);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i]) {
      result.dataset.points.push_back(*points[i]);
    } else {
      result.failures.push_back({subject.workload(), frequencies_hz[i], errors[i]});
    }
  }
  return result;
}

std::vector<double> arithmetic_grid(double first, double last, double step,
                                    std::optional<double> exclude) {
  if (!(step > 0.0) || !(last >= first)) throw InvalidArgument("grid needs step > 0 and last >= first");
  std::vector<double> out;
  const auto n = static_cast<long long>(std::floor((last - first) / step + 1e-9));
  for (long long i = 0; i <= n; ++i) {
    // Computed from the index, not accumulated, so values are exact for
    // exactly representable first/step.
    const double v = first + static_cast<double>(i) * step;
    // Excluded values often come from w_g / 2pi, which is not exactly 60.
    if (exclude && std::abs(v - *exclude) <= 1e-9 * std::max(1.0, std::abs(*exclude))) continue;
    out.push_back(v);
  }
  return out;
}

std::vector<double> default_workload_grid() { return arithmetic_grid(800.0, 3600.0, 60.0); }

std::vector<double> default_frequency_grid() { return arithmetic_grid(1.0, 119.0, 1.0, 60.0); }

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p += ".meta.json";
  return p;
}

void write_dataset_csv(std::ostream& out, const ImpedanceDataset& dataset, const std::string& comment) {
  if (!comment.empty()) {
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  out << "p_load_w,f_hz,re_ohm,im_ohm\n";
  for (const ImpedancePoint& p : dataset.points) {
    out << format_double(p.p_load) << ',' << format_double(p.f_hz) << ',' << format_double(p.re)
        << ',' << format_double(p.im) << '\n';
  }
}

void save_dataset(const ImpedanceDataset& dataset, const std::filesystem::path& csv_path,
                  const std::string& comment) {
  dataset.validate();
  const SweepMetadata& m = dataset.meta;
  // nlohmann emits doubles with round-trip precision.
  const nlohmann::json meta{{"workloads_w", m.workloads_w},
                            {"frequencies_hz", m.frequencies_hz},
                            {"injection_fraction", m.injection_fraction},
                            {"theta0_rad", m.theta0},
                            {"grid_resolution_hz", m.grid_resolution_hz},
                            {"min_record_s", m.min_record_s},
                            {"tone_settle_time_s", m.tone_settle_time_s},
                            {"dt_s", m.dt_s},
                            {"w_g_rad_s", m.w_g},
                            {"provenance", m.provenance},
                            {"points", dataset.points.size()}};
  write_file_atomic(metadata_path(csv_path), [&](std::ostream& out) { out << meta.dump(2) << '\n'; });
  write_file_atomic(csv_path, [&](std::ostream& out) { write_dataset_csv(out, dataset, comment); });
}

ImpedanceDataset load_dataset(const std::filesystem::path& csv_path) {
  const CsvTable table = read_csv_file(csv_path);
  const std::size_t cp = table.column("p_load_w");
  const std::size_t cf = table.column("f_hz");
  const std::size_t cr = table.column("re_ohm");
  const std::size_t ci = table.column("im_ohm");

  ImpedanceDataset ds;
  ds.points.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ds.points.push_back({parse_double(row[cf]), parse_double(row[cp]), parse_double(row[cr]),
                         parse_double(row[ci])});
  }

  const auto meta_file = metadata_path(csv_path);
  if (std::filesystem::exists(meta_file)) {
    std::ifstream in(meta_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      SweepMetadata& m = ds.meta;
      m.workloads_w = j.at("workloads_w").get<std::vector<double>>();
      m.frequencies_hz = j.at("frequencies_hz").get<std::vector<double>>();
      m.injection_fraction = j.at("injection_fraction").get<double>();
      m.theta0 = j.at("theta0_rad").get<double>();
      m.grid_resolution_hz = j.at("grid_resolution_hz").get<double>();
      m.min_record_s = j.at("min_record_s").get<double>();
      m.tone_settle_time_s = j.at("tone_settle_time_s").get<double>();
      m.dt_s = j.at("dt_s").get<double>();
      m.w_g = j.at("w_g_rad_s").get<double>();
      m.provenance = j.at("provenance").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(meta_file.string() + ": " + e.what());
    }
  } else {
    std::set<double> w;
    std::set<double> f;
    for (const auto& p : ds.points) {
      w.insert(p.p_load);
      f.insert(p.f_hz);
    }
    ds.meta.workloads_w.assign(w.begin(), w.end());
    ds.meta.frequencies_hz.assign(f.begin(), f.end());
  }
  try {
    ds.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(csv_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace ssrguard
