#include "ssrguard/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "ssrguard/error.hpp"

namespace ssrguard {

using nlohmann::json;

double require_number(const json& tree, const std::string& key, const std::string& context) {
  const std::string where = context.empty() ? key : context + "." + key;
  if (!tree.is_object() || !tree.contains(key)) throw InvalidArgument(where + ": missing");
  const json& v = tree.at(key);
  if (!v.is_number()) throw InvalidArgument(where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InvalidArgument(where + ": must be finite");
  return d;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

PfcParams pfc_params_from_json(const json& tree) {
  const std::string ctx = "circuit";
  PfcParams p;
  p.filter_inductance = require_number(tree, "filter_inductance_h", ctx);
  p.filter_capacitance = require_number(tree, "filter_capacitance_f", ctx);
  p.boost_inductance = require_number(tree, "boost_inductance_h", ctx);
  p.dc_capacitance = require_number(tree, "dc_capacitance_f", ctx);
  p.filter_resistance = require_number(tree, "filter_resistance_ohm", ctx);
  p.boost_resistance = require_number(tree, "boost_resistance_ohm", ctx);
  p.diode_resistance = require_number(tree, "diode_resistance_ohm", ctx);
  p.diode_drop = require_number(tree, "diode_drop_v", ctx);
  p.v_ref = require_number(tree, "v_ref_v", ctx);
  p.v_min = require_number(tree, "v_min_v", ctx);
  p.v_rms = require_number(tree, "v_rms_v", ctx);
  p.w_g = 2.0 * std::numbers::pi * require_number(tree, "grid_frequency_hz", ctx);
  if (!tree.contains("voltage_loop") || !tree.contains("current_loop")) {
    throw InvalidArgument(ctx + ": voltage_loop and current_loop gain blocks are required");
  }
  p.kp_v = require_number(tree.at("voltage_loop"), "kp", ctx + ".voltage_loop");
  p.ki_v = require_number(tree.at("voltage_loop"), "ki", ctx + ".voltage_loop");
  p.kp_i = require_number(tree.at("current_loop"), "kp", ctx + ".current_loop");
  p.ki_i = require_number(tree.at("current_loop"), "ki", ctx + ".current_loop");
  p.d_min = require_number(tree, "d_min", ctx);
  p.d_max = require_number(tree, "d_max", ctx);
  if (tree.contains("duty_feedforward")) {
    if (!tree.at("duty_feedforward").is_boolean()) {
      throw InvalidArgument(ctx + ".duty_feedforward: expected true/false");
    }
    p.duty_feedforward = tree.at("duty_feedforward").get<bool>();
  }
  p.validate();
  return p;
}

PfcParams load_pfc_params(const std::filesystem::path& path) {
  try {
    return pfc_params_from_json(load_json_file(path));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

json pfc_params_to_json(const PfcParams& p) {
  return json{{"filter_inductance_h", p.filter_inductance},
              {"filter_capacitance_f", p.filter_capacitance},
              {"boost_inductance_h", p.boost_inductance},
              {"dc_capacitance_f", p.dc_capacitance},
              {"filter_resistance_ohm", p.filter_resistance},
              {"boost_resistance_ohm", p.boost_resistance},
              {"diode_resistance_ohm", p.diode_resistance},
              {"diode_drop_v", p.diode_drop},
              {"v_ref_v", p.v_ref},
              {"v_min_v", p.v_min},
              {"v_rms_v", p.v_rms},
              {"grid_frequency_hz", p.w_g / (2.0 * std::numbers::pi)},
              {"voltage_loop", {{"kp", p.kp_v}, {"ki", p.ki_v}}},
              {"current_loop", {{"kp", p.kp_i}, {"ki", p.ki_i}}},
              {"d_min", p.d_min},
              {"d_max", p.d_max},
              {"duty_feedforward", p.duty_feedforward}};
}

}  // namespace ssrguard
