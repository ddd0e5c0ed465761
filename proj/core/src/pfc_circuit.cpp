#include "ssrguard/pfc_circuit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidArgument(std::string("PfcParams.") + name + " must be finite and > 0, got " +
                          format_double(value));
  }
}

using StateArray = std::array<double, PfcState::kSize>;

StateArray axpy(const StateArray& x, double a, const StateArray& k) {
  StateArray out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + a * k[i];
  return out;
}

// Rates without argument checks; callers verify finiteness once per step.
inline StateArray rates(const StateArray& x, const PfcParams& p, double v_in, double p_load,
                        ControlSignals* signals = nullptr) {
  const PfcState s = PfcState::from_array(x);
  const ControlSignals c = control_signals(s, p);
  if (signals != nullptr) *signals = c;

  // The bridge and boost diode block reverse current.
  const double i_lb = std::max(s.i_lb, 0.0);
  const double v_rect = std::max(std::abs(s.v_fbri) - 2.0 * p.diode_drop, 0.0) -
                        2.0 * p.diode_resistance * i_lb;
  const double bridge_current = s.v_fbri >= 0.0 ? i_lb : -i_lb;
  const double off = 1.0 - c.duty;

  StateArray r{};
  r[0] = (v_in - p.filter_resistance * s.i_fil - s.v_fbri) / p.filter_inductance;
  r[1] = (s.i_fil - bridge_current) / p.filter_capacitance;
  r[2] = (v_rect - p.boost_resistance * i_lb - off * s.v_dc) / p.boost_inductance;
  if (s.i_lb <= 0.0 && r[2] < 0.0) r[2] = 0.0;
  r[3] = (off * i_lb - p_load / std::max(s.v_dc, p.v_min)) / p.dc_capacitance;
  if (!c.saturated) {
    r[4] = p.v_ref - s.v_dc;
    r[5] = c.current_reference - s.i_lb;
  }
  return r;
}

bool all_finite(const StateArray& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

class Stepper {
 public:
  Stepper(const PfcParams& params, const SourceSpec& source, double p_load, double dt)
      : params_(params), source_(source), p_load_(p_load), dt_(dt) {}

  StateArray step(const StateArray& x, double t) const {
    const double h = dt_;
    const double v_mid = two_tone_voltage(t + 0.5 * h, source_);
    const StateArray k1 = rates(x, params_, two_tone_voltage(t, source_), p_load_);
    const StateArray k2 = rates(axpy(x, 0.5 * h, k1), params_, v_mid, p_load_);
    const StateArray k3 = rates(axpy(x, 0.5 * h, k2), params_, v_mid, p_load_);
    const StateArray k4 = rates(axpy(x, h, k3), params_, two_tone_voltage(t + h, source_), p_load_);
    StateArray out;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return out;
  }

 private:
  const PfcParams& params_;
  const SourceSpec& source_;
  double p_load_;
  double dt_;
};

void check_integration_args(const PfcParams& params, double p_load, double dt) {
  params.validate();
  if (!(p_load >= 0.0) || !std::isfinite(p_load)) {
    throw InvalidArgument("P_load must be finite and >= 0, got " + format_double(p_load));
  }
  const double max_dt = params.fundamental_period() / 200.0;
  if (!(dt > 0.0) || dt > max_dt * (1.0 + 1e-12)) {
    throw InvalidArgument("time step " + format_double(dt) + " s outside (0, " +
                          format_double(max_dt) + "]");
  }
}

[[noreturn]] void throw_divergence(double t) {
  std::ostringstream msg;
  msg << "integration diverged (non-finite state) at t = " << format_double(t) << " s";
  throw DivergenceError(msg.str(), t);
}

}  // namespace

double PfcParams::v_peak() const { return std::numbers::sqrt2 * v_rms; }

double PfcParams::fundamental_period() const { return 2.0 * std::numbers::pi / w_g; }

void PfcParams::validate() const {
  require_positive(filter_inductance, "filter_inductance");
  require_positive(filter_capacitance, "filter_capacitance");
  require_positive(boost_inductance, "boost_inductance");
  require_positive(dc_capacitance, "dc_capacitance");
  require_positive(filter_resistance, "filter_resistance");
  require_positive(boost_resistance, "boost_resistance");
  require_positive(diode_resistance, "diode_resistance");
  require_positive(v_ref, "v_ref");
  require_positive(v_min, "v_min");
  require_positive(v_rms, "v_rms");
  require_positive(w_g, "w_g");
  if (!(diode_drop >= 0.0)) throw InvalidArgument("PfcParams.diode_drop must be >= 0");
  for (double g : {kp_v, ki_v, kp_i, ki_i}) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw InvalidArgument("PfcParams controller gains must be finite and >= 0");
    }
  }
  if (!(d_min >= 0.0 && d_min < d_max && d_max <= 1.0)) {
    throw InvalidArgument("PfcParams duty bounds must satisfy 0 <= d_min < d_max <= 1");
  }
  if (!(v_ref > v_peak())) {
    throw InvalidArgument("PfcParams.v_ref must exceed the input peak sqrt(2)*v_rms = " +
                          format_double(v_peak()));
  }
}

std::array<double, PfcState::kSize> PfcState::as_array() const {
  return {i_fil, v_fbri, i_lb, v_dc, sigma_v, sigma_i};
}

PfcState PfcState::from_array(const std::array<double, kSize>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5]};
}

bool PfcState::finite() const {
  for (double v : as_array()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

SourceSpec SourceSpec::fundamental(const PfcParams& params, double theta0) {
  return {params.v_peak(), params.w_g, theta0, 0.0, 0.0};
}

void SourceSpec::validate() const {
  if (!(v_peak >= 0.0) || !(w_g > 0.0)) {
    throw InvalidArgument("SourceSpec requires v_peak >= 0 and w_g > 0");
  }
  if (!(dv_hm >= 0.0)) throw InvalidArgument("SourceSpec.dv_hm must be >= 0");
  if (dv_hm > 0.0) {
    if (!(w_hm > 0.0 && w_hm < 2.0 * w_g) || w_hm == w_g) {
      throw InvalidArgument("SourceSpec.w_hm must lie in (0, 2 w_g) and differ from w_g");
    }
    if (dv_hm > 0.1 * v_peak) {
      throw InvalidArgument("SourceSpec.dv_hm exceeds 10% of the fundamental amplitude");
    }
  }
}

double two_tone_voltage(double t, const SourceSpec& source) {
  double v = source.v_peak * std::cos(source.w_g * t + source.theta0);
  if (source.dv_hm != 0.0) v += source.dv_hm * std::cos(source.w_hm * t);
  return v;
}

ControlSignals control_signals(const PfcState& s, const PfcParams& p) {
  ControlSignals c;
  const double v_abs = std::abs(s.v_fbri);
  const double v_rect = std::max(v_abs - 2.0 * p.diode_drop, 0.0) -
                        2.0 * p.diode_resistance * std::max(s.i_lb, 0.0);
  const double amplitude = p.kp_v * (p.v_ref - s.v_dc) + p.ki_v * s.sigma_v;
  c.current_reference = amplitude * v_abs / p.v_peak();
  double cmd = p.kp_i * (c.current_reference - s.i_lb) + p.ki_i * s.sigma_i;
  if (p.duty_feedforward) cmd += 1.0 - v_rect / std::max(s.v_dc, p.v_min);
  c.duty_command = cmd;
  c.duty = std::clamp(cmd, p.d_min, p.d_max);
  c.saturated = cmd < p.d_min || cmd > p.d_max;
  return c;
}

PfcState derivative(const PfcState& s, const PfcParams& p, double v_in, double p_load,
                    ControlSignals* signals) {
  if (!s.finite() || !std::isfinite(v_in)) {
    throw DivergenceError("derivative evaluated at a non-finite state", 0.0);
  }
  return PfcState::from_array(rates(s.as_array(), p, v_in, p_load, signals));
}

double default_time_step(const PfcParams& params) { return params.fundamental_period() / 2000.0; }

PfcState cold_start(const PfcParams& params) {
  PfcState s;
  s.v_dc = params.v_peak() - 2.0 * params.diode_drop;
  return s;
}

Trajectory integrate(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                     double p_load, double duration, double dt, double t0) {
  check_integration_args(params, p_load, dt);
  source.validate();
  if (!(duration >= 0.0)) throw InvalidArgument("duration must be >= 0");
  if (!initial.finite()) throw_divergence(t0);

  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  Trajectory traj;
  traj.t0 = t0;
  traj.dt = dt;
  traj.states.reserve(steps + 1);
  traj.states.push_back(initial);

  const Stepper stepper(params, source, p_load, dt);
  StateArray x = initial.as_array();
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    x = stepper.step(x, t);
    if (!all_finite(x)) throw_divergence(t + dt);
    traj.states.push_back(PfcState::from_array(x));
  }
  return traj;
}

PfcState advance(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                 double p_load, std::size_t steps, double dt, double t0) {
  check_integration_args(params, p_load, dt);
  source.validate();
  const Stepper stepper(params, source, p_load, dt);
  StateArray x = initial.as_array();
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    x = stepper.step(x, t);
    if (!all_finite(x)) throw_divergence(t + dt);
  }
  PfcState out = PfcState::from_array(x);
  if (!out.finite()) throw_divergence(t0 + static_cast<double>(steps) * dt);
  return out;
}

SettleResult settle(const PfcParams& params, const SourceSpec& source, double p_load,
                    const SettleOptions& options) {
  return settle_from(cold_start(params), params, source, p_load, options);
}

SettleResult settle_from(const PfcState& initial, const PfcParams& params, const SourceSpec& source,
                         double p_load, const SettleOptions& options) {
  const double dt = options.dt > 0.0 ? options.dt : default_time_step(params);
  check_integration_args(params, p_load, dt);
  source.validate();
  if (options.consecutive_cycles < 1 || !(options.tolerance > 0.0) || !(options.max_time > 0.0)) {
    throw InvalidArgument("SettleOptions requires consecutive_cycles >= 1, tolerance > 0, max_time > 0");
  }
  const auto steps_per_cycle =
      static_cast<std::size_t>(std::llround(params.fundamental_period() / dt));
  const auto max_cycles =
      static_cast<int>(std::ceil(options.max_time / params.fundamental_period() - 1e-9));

  const Stepper stepper(params, source, p_load, dt);
  StateArray x = initial.as_array();
  if (!initial.finite()) throw_divergence(0.0);

  double previous_mean = 0.0;
  double last_delta = std::numeric_limits<double>::infinity();
  int quiet = 0;
  std::size_t k = 0;
  for (int cycle = 1; cycle <= max_cycles; ++cycle) {
    double sum = 0.0;
    for (std::size_t j = 0; j < steps_per_cycle; ++j, ++k) {
      const double t = static_cast<double>(k) * dt;
      x = stepper.step(x, t);
      if (!all_finite(x)) throw_divergence(t + dt);
      sum += x[3];
    }
    const double mean = sum / static_cast<double>(steps_per_cycle);
    if (!std::isfinite(mean)) throw_divergence(static_cast<double>(k) * dt);
    if (cycle > 1) {
      last_delta = std::abs(mean - previous_mean) / std::max(std::abs(previous_mean), 1e-12);
      quiet = last_delta < options.tolerance ? quiet + 1 : 0;
      if (quiet >= options.consecutive_cycles) {
        return {PfcState::from_array(x), static_cast<double>(k) * dt, mean, cycle};
      }
    }
    previous_mean = mean;
  }
  std::ostringstream msg;
  msg << "converter did not settle within " << format_double(options.max_time)
      << " s; last cycle-over-cycle DC mean change " << format_double(last_delta);
  throw SettleTimeout(msg.str(), last_delta);
}

std::vector<double> extract_input_current(const Trajectory& trajectory) {
  std::vector<double> out;
  out.reserve(trajectory.size());
  for (const PfcState& s : trajectory.states) out.push_back(s.i_fil);
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "t_s,i_fil_a,v_fbri_v,i_lb_a,v_dc_v,sigma_v,sigma_i\n";
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const PfcState& s = trajectory.states[k];
    out << format_double(trajectory.time(k)) << ',' << format_double(s.i_fil) << ','
        << format_double(s.v_fbri) << ',' << format_double(s.i_lb) << ',' << format_double(s.v_dc)
        << ',' << format_double(s.sigma_v) << ',' << format_double(s.sigma_i) << '\n';
  }
}

}  // namespace ssrguard
