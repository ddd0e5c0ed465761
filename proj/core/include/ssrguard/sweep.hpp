#pragma once

// Two-tone frequency sweep: inject a small tone on top of the fundamental,
// read the input-current phasor at the tone frequency, and take the ratio.

#include <complex>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssrguard/pfc_circuit.hpp"

namespace ssrguard {

struct PhasorMeasurement {
  double frequency = 0.0;              // rad/s
  std::complex<double> value;          // amplitude-scaled: A cos(wt + phi) -> A e^{j phi}

  double magnitude() const { return std::abs(value); }
  /// In (-pi, pi].
  double phase() const;
};

// The tone frequency is stored in Hz, the unit of the sweep grid, so that
// datasets round-trip through text without a 2*pi conversion.
struct ImpedancePoint {
  double f_hz = 0.0;     // Hz
  double p_load = 0.0;   // W
  double re = 0.0;       // ohm
  double im = 0.0;       // ohm

  std::complex<double> z() const { return {re, im}; }
  double magnitude() const { return std::abs(z()); }
  double phase() const { return std::arg(z()); }
  double w_hm() const;   // rad/s

  friend bool operator==(const ImpedancePoint&, const ImpedancePoint&) = default;
};

/// Identical converters in parallel: Z / n.
ImpedancePoint aggregate_parallel(const ImpedancePoint& point, std::size_t n_converters);

struct SweepConfig {
  double injection_fraction = 0.05;     // dV_hm / V_peak
  double theta0 = 0.0;                  // fundamental phase [rad]
  double grid_resolution_hz = 0.5;      // every frequency must sit on this grid
  double frequency_accuracy_hz = 0.5;   // record length >= max(1 s, 1/accuracy)
  double tone_settle_time = 0.5;        // two-tone excitation before the record [s]
  double dt = 0.0;                      // 0 -> default_time_step
  double current_floor = 1e-9;          // [A]; smaller phasors are unmeasurable
  unsigned workers = 0;                 // 0 -> hardware concurrency
  SettleOptions settle;

  double min_duration() const;
  void validate() const;
};

/// Smallest K with K*dt a whole number of common periods of both tones and
/// K*dt >= min_duration. Throws InvalidArgument for off-grid frequencies.
std::size_t coherent_window(double w_g, double w_hm, double dt, double min_duration,
                            double grid_resolution_hz = 0.5);

/// Single-bin correlation at f_hz; samples are taken at t0 + k*dt.
/// Throws InvalidArgument unless the record spans a whole number of periods.
PhasorMeasurement single_bin_dft(std::span<const double> samples, double dt, double f_hz,
                                 double t0 = 0.0);

/// Input-current record produced by a subject under a two-tone source.
struct CurrentRecord {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> samples;
};

/// Anything whose input current can be recorded under a two-tone source.
class ImpedanceSubject {
 public:
  virtual ~ImpedanceSubject() = default;
  /// Runs `pre_roll` seconds under `source` from a settled start, then records `count` samples.
  virtual CurrentRecord respond(const SourceSpec& source, double dt, std::size_t count,
                                double pre_roll) const = 0;
  virtual double workload() const = 0;
};

/// The PFC converter at a fixed workload. Settles once under the unperturbed
/// fundamental and reuses that state for every tone.
class PfcSubject final : public ImpedanceSubject {
 public:
  PfcSubject(PfcParams params, double p_load, const SweepConfig& config);

  CurrentRecord respond(const SourceSpec& source, double dt, std::size_t count,
                        double pre_roll) const override;
  double workload() const override { return p_load_; }
  const SettleResult& settled() const { return settled_; }

 private:
  PfcParams params_;
  double p_load_;
  SettleResult settled_;
};

/// Linear series branch used as an analytic oracle in place of the converter.
class SeriesBranchSubject final : public ImpedanceSubject {
 public:
  enum class Kind { RL, RC };
  static SeriesBranchSubject rl(double r_ohm, double l_h);
  static SeriesBranchSubject rc(double r_ohm, double c_f);

  CurrentRecord respond(const SourceSpec& source, double dt, std::size_t count,
                        double pre_roll) const override;
  double workload() const override { return 0.0; }
  std::complex<double> analytic_impedance(double w) const;

 private:
  SeriesBranchSubject(Kind kind, double r, double x) : kind_(kind), r_(r), x_(x) {}
  Kind kind_;
  double r_;
  double x_;  // L [H] or C [F]
};

/// Z(w_hm) = dV_hm / I(w_hm) with the tone phase as reference.
ImpedancePoint measure_impedance(const ImpedanceSubject& subject, const PfcParams& params,
                                 double w_hm, const SweepConfig& config);
ImpedancePoint measure_impedance(const PfcParams& params, double p_load, double w_hm,
                                 const SweepConfig& config);

struct SweepMetadata {
  std::vector<double> workloads_w;
  std::vector<double> frequencies_hz;
  double injection_fraction = 0.05;
  double theta0 = 0.0;
  double grid_resolution_hz = 0.5;
  double min_record_s = 1.0;
  double tone_settle_time_s = 0.5;
  double dt_s = 0.0;
  double w_g = 0.0;
  std::string provenance;  // free text, typically a config digest
};

struct ImpedanceDataset {
  std::vector<ImpedancePoint> points;
  SweepMetadata meta;

  /// Throws InvalidArgument on duplicate (w_hm, P_load) pairs or points
  /// off the metadata grids.
  void validate() const;
  std::vector<ImpedancePoint> curve(double p_load) const;
};

struct SweepFailure {
  double p_load = 0.0;
  double f_hz = 0.0;
  std::string message;
};

struct SweepResult {
  ImpedanceDataset dataset;
  std::vector<SweepFailure> failures;
};

/// Workload-major, frequency-minor Cartesian sweep. Points are computed on
/// `config.workers` threads; ordering is independent of completion order.
SweepResult generate_dataset(const PfcParams& params, const std::vector<double>& workloads_w,
                             const std::vector<double>& frequencies_hz, const SweepConfig& config);

/// Sweep of an arbitrary subject (single workload) over a frequency list.
SweepResult sweep_subject(const ImpedanceSubject& subject, const PfcParams& params,
                          const std::vector<double>& frequencies_hz, const SweepConfig& config);

/// Default grids: 800..3600 W in 60 W steps, 1..119 Hz in 1 Hz steps without 60 Hz.
std::vector<double> default_workload_grid();
std::vector<double> default_frequency_grid();
/// Inclusive arithmetic grid, dropping any value within round-off of `exclude`.
std::vector<double> arithmetic_grid(double first, double last, double step,
                                    std::optional<double> exclude = std::nullopt);

/// Writes the CSV and its JSON sidecar, each through a temporary file.
/// Every line of `comment` is emitted as a leading '#' line of the CSV.
void save_dataset(const ImpedanceDataset& dataset, const std::filesystem::path& csv_path,
                  const std::string& comment = {});
/// Without a sidecar the grids are rebuilt from the points and the remaining
/// metadata is left at its defaults.
ImpedanceDataset load_dataset(const std::filesystem::path& csv_path);
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);
void write_dataset_csv(std::ostream& out, const ImpedanceDataset& dataset,
                       const std::string& comment = {});

}  // namespace ssrguard
