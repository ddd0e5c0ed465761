#pragma once

// Averaged large-signal model of a single-phase PFC front end: EMI filter,
// full-bridge rectifier, boost stage with dual-loop PI control, and a
// constant-power load on the DC link.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace ssrguard {

struct PfcParams {
  double filter_inductance = 0.0;    // L_f [H]
  double filter_capacitance = 0.0;   // C_f [F]
  double boost_inductance = 0.0;     // L_b [H]
  double dc_capacitance = 0.0;       // C_dc [F]
  double filter_resistance = 0.0;    // r_Lf [ohm]
  double boost_resistance = 0.0;     // r_Lb [ohm]
  double diode_resistance = 0.0;     // r_d [ohm]
  double diode_drop = 0.0;           // V_d [V]
  double v_ref = 0.0;                // DC-link reference [V]
  double kp_v = 0.0;                 // voltage loop [A/V]
  double ki_v = 0.0;                 // voltage loop [A/(V s)]
  double kp_i = 0.0;                 // current loop [1/A]
  double ki_i = 0.0;                 // current loop [1/(A s)]
  double d_min = 0.0;
  double d_max = 1.0;
  double v_min = 0.0;                // CPL denominator clamp [V]
  double v_rms = 0.0;                // nominal input [V rms]
  double w_g = 0.0;                  // grid angular frequency [rad/s]
  bool duty_feedforward = true;      // add 1 - v_rect/v_dc to the current-loop output

  double v_peak() const;
  double fundamental_period() const;

  /// Throws InvalidArgument naming the first violated field.
  void validate() const;
};

/// Six-state averaged converter state.
struct PfcState {
  double i_fil = 0.0;    // filter inductor current = common-bus current [A]
  double v_fbri = 0.0;   // filter capacitor / bridge input voltage [V]
  double i_lb = 0.0;     // boost inductor current [A]
  double v_dc = 0.0;     // DC-link voltage [V]
  double sigma_v = 0.0;  // voltage-loop integral [V s]
  double sigma_i = 0.0;  // current-loop integral [A s]

  static constexpr std::size_t kSize = 6;
  std::array<double, kSize> as_array() const;
  static PfcState from_array(const std::array<double, kSize>& a);
  bool finite() const;

  friend bool operator==(const PfcState&, const PfcState&) = default;
};

/// Two-tone excitation: V_peak cos(w_g t + theta_0) + dV cos(w_hm t).
struct SourceSpec {
  double v_peak = 0.0;
  double w_g = 0.0;
  double theta0 = 0.0;
  double dv_hm = 0.0;
  double w_hm = 0.0;

  /// Unperturbed fundamental matching the converter's nominal input.
  static SourceSpec fundamental(const PfcParams& params, double theta0 = 0.0);
  void validate() const;
};

double two_tone_voltage(double t, const SourceSpec& source);

/// Controller signals evaluated alongside the state derivative.
struct ControlSignals {
  double current_reference = 0.0;  // [A]
  double duty_command = 0.0;       // before saturation
  double duty = 0.0;               // applied
  bool saturated = false;
};

/// d/dt of every state field. Throws DivergenceError on a non-finite state.
PfcState derivative(const PfcState& state, const PfcParams& params, double v_in, double p_load,
                    ControlSignals* signals = nullptr);

/// Controller outputs at a given state, without computing rates.
ControlSignals control_signals(const PfcState& state, const PfcParams& params);

struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<PfcState> states;

  std::size_t size() const { return states.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Fixed-step classical RK4 from `initial` at absolute time `t0`.
/// Returns round(duration/dt)+1 samples including the initial state.
Trajectory integrate(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                     double p_load, double duration, double dt, double t0 = 0.0);

/// Same stepping as integrate() but only the final state is kept.
PfcState advance(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                 double p_load, std::size_t steps, double dt, double t0 = 0.0);

/// Default step: one fundamental period / 2000.
double default_time_step(const PfcParams& params);

/// Pre-charged DC link (rectified peak), everything else at rest.
PfcState cold_start(const PfcParams& params);

struct SettleOptions {
  double max_time = 2.0;          // simulated seconds
  double tolerance = 1e-3;        // relative cycle-over-cycle DC mean change
  int consecutive_cycles = 5;
  double dt = 0.0;                // 0 -> default_time_step
};

struct SettleResult {
  PfcState state;
  double elapsed = 0.0;           // simulated time at return, a whole number of cycles
  double dc_mean = 0.0;           // mean v_dc over the last cycle
  int cycles = 0;
};

/// Integrate until the per-cycle DC-link mean changes by less than `tolerance`
/// for `consecutive_cycles` cycles. Throws SettleTimeout past `max_time`.
SettleResult settle(const PfcParams& params, const SourceSpec& source, double p_load,
                    const SettleOptions& options = {});
SettleResult settle_from(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                         double p_load, const SettleOptions& options = {});

/// Common-bus current I_com = I_fil per sample.
std::vector<double> extract_input_current(const Trajectory& trajectory);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace ssrguard
