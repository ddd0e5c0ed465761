#include "run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "ssrguard/analysis.hpp"
#include "ssrguard/config.hpp"
#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard::cli {

using nlohmann::json;

namespace {

const json& section(const json& tree, const char* key) {
  static const json empty = json::object();
  if (!tree.contains(key)) return empty;
  const json& s = tree.at(key);
  if (!s.is_object()) throw InvalidArgument(std::string(key) + ": expected an object");
  return s;
}

double number_or(const json& s, const std::string& key, const std::string& where, double fallback) {
  return s.contains(key) ? require_number(s, key, where) : fallback;
}

std::size_t count_or(const json& s, const std::string& key, const std::string& where, std::size_t fallback) {
  if (!s.contains(key)) return fallback;
  const double v = require_number(s, key, where);
  if (v < 0.0 || v != std::floor(v)) throw InvalidArgument(where + "." + key + ": expected a whole number >= 0");
  return static_cast<std::size_t>(v);
}

std::string string_or(const json& s, const std::string& key, const std::string& where, std::string fallback) {
  if (!s.contains(key)) return fallback;
  if (!s.at(key).is_string()) throw InvalidArgument(where + "." + key + ": expected a string");
  return s.at(key).get<std::string>();
}

std::vector<int> sizes_or(const json& s, const std::string& key, const std::string& where,
                          std::vector<int> fallback) {
  if (!s.contains(key)) return fallback;
  const json& a = s.at(key);
  if (!a.is_array() || a.empty()) throw InvalidArgument(where + "." + key + ": expected a non-empty array");
  std::vector<int> out;
  for (const json& v : a) {
    if (!v.is_number_integer() || v.get<int>() < 1) {
      throw InvalidArgument(where + "." + key + ": layer sizes must be integers >= 1");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

template <typename Fn>
void with_context(const std::string& where, Fn fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(where + ": " + e.what());
  }
}

}  // namespace

std::vector<double> parse_grid(const json& node, const std::string& where) {
  std::vector<double> out;
  if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_number()) throw InvalidArgument(where + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(node[i].get<double>());
    }
  } else if (node.is_object()) {
    const double first = require_number(node, "first", where);
    const double last = require_number(node, "last", where);
    const double step = require_number(node, "step", where);
    std::optional<double> exclude;
    if (node.contains("exclude")) exclude = require_number(node, "exclude", where);
    with_context(where, [&] { out = arithmetic_grid(first, last, step, exclude); });
  } else {
    throw InvalidArgument(where + ": expected a list or {first, last, step}");
  }
  if (out.empty()) throw InvalidArgument(where + ": grid is empty");
  return out;
}

RunConfig run_config_from_json(const json& input, const std::filesystem::path& base_dir) {
  if (!input.is_object()) throw InvalidArgument("run config must be a JSON object");
  RunConfig c;
  c.resolved = input;

  // circuit: inline object or path to a circuit file
  if (!input.contains("circuit")) throw InvalidArgument("circuit: missing");
  json circuit = input.at("circuit");
  if (circuit.is_string()) {
    std::filesystem::path p = circuit.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw InvalidArgument("circuit: file '" + p.string() + "' does not exist");
    circuit = load_json_file(p);
  }
  c.circuit = pfc_params_from_json(circuit);
  c.resolved["circuit"] = pfc_params_to_json(c.circuit);
  c.w_g = c.circuit.w_g;

  if (input.contains("output_dir")) {
    c.output_dir = string_or(input, "output_dir", "", "out");
  }

  const json& sw = section(input, "sweep");
  c.workloads_w = sw.contains("workloads_w") ? parse_grid(sw.at("workloads_w"), "sweep.workloads_w")
                                             : default_workload_grid();
  c.frequencies_hz = sw.contains("frequencies_hz")
                         ? parse_grid(sw.at("frequencies_hz"), "sweep.frequencies_hz")
                         : default_frequency_grid();
  c.sweep.injection_fraction = number_or(sw, "injection_fraction", "sweep", c.sweep.injection_fraction);
  c.sweep.theta0 = number_or(sw, "theta0_deg", "sweep", 0.0) * std::numbers::pi / 180.0;
  c.sweep.grid_resolution_hz = number_or(sw, "grid_resolution_hz", "sweep", c.sweep.grid_resolution_hz);
  c.sweep.frequency_accuracy_hz = number_or(sw, "frequency_accuracy_hz", "sweep", 1.0);
  c.sweep.tone_settle_time = number_or(sw, "tone_settle_time_s", "sweep", c.sweep.tone_settle_time);
  c.sweep.dt = number_or(sw, "dt_s", "sweep", 0.0);
  c.sweep.settle.max_time = number_or(sw, "settle_max_time_s", "sweep", c.sweep.settle.max_time);
  c.sweep.workers = static_cast<unsigned>(count_or(sw, "workers", "sweep", 0));
  c.dataset_file = string_or(sw, "dataset", "sweep", c.dataset_file);
  with_context("sweep", [&] { c.sweep.validate(); });

  const json& su = section(input, "surrogate");
  c.training.hidden = sizes_or(su, "hidden", "surrogate", c.training.hidden);
  c.compare_hidden = sizes_or(su, "compare_hidden", "surrogate", c.compare_hidden);
  c.training.epochs = count_or(su, "epochs", "surrogate", c.training.epochs);
  c.training.batch_size = count_or(su, "batch_size", "surrogate", c.training.batch_size);
  c.training.learning_rate = number_or(su, "learning_rate", "surrogate", c.training.learning_rate);
  c.training.max_learning_rate = number_or(su, "max_learning_rate", "surrogate", c.training.max_learning_rate);
  c.training.momentum = number_or(su, "momentum", "surrogate", c.training.momentum);
  c.training.seed = count_or(su, "seed", "surrogate", 0);
  c.train_fraction = number_or(su, "train_fraction", "surrogate", c.train_fraction);
  c.split_seed = count_or(su, "split_seed", "surrogate", 0);
  c.model_file = string_or(su, "model", "surrogate", c.model_file);
  with_context("surrogate", [&] { c.training.validate(); });
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw InvalidArgument("surrogate.train_fraction must lie in (0, 1)");
  }

  const json& gr = section(input, "grid");
  c.r_grid = number_or(gr, "r_grid_ohm", "grid", c.r_grid);
  if (gr.contains("l_grid_mh")) {
    c.l_grid_values.clear();
    for (double l : parse_grid(gr.at("l_grid_mh"), "grid.l_grid_mh")) c.l_grid_values.push_back(l * 1e-3);
  }
  c.n_converters = count_or(gr, "n_converters", "grid", c.n_converters);
  if (c.n_converters < 1) throw InvalidArgument("grid.n_converters must be >= 1");
  for (double l : c.l_grid_values) {
    with_context("grid", [&] { c.grid(l).validate(); });
  }

  const json& mg = section(input, "margin");
  c.margin.coarse_points = count_or(mg, "coarse_points", "margin", c.margin.coarse_points);
  c.margin.bo_evaluations = count_or(mg, "bo_evaluations", "margin", c.margin.bo_evaluations);
  c.margin.candidates = count_or(mg, "candidates", "margin", c.margin.candidates);
  c.margin.seed = count_or(mg, "seed", "margin", 0);
  c.threshold = number_or(mg, "threshold", "margin", c.threshold);
  c.assess_workloads_w = mg.contains("workloads_w") ? parse_grid(mg.at("workloads_w"), "margin.workloads_w")
                                                     : std::vector<double>{800.0, 2060.0, 3040.0};
  with_context("margin", [&] { c.margin.validate(); });

  const json& ct = section(input, "control");
  c.control.beta = number_or(ct, "beta", "control", c.control.beta);
  c.control.p_min = number_or(ct, "p_min_w", "control", c.control.p_min);
  c.control.p_max = number_or(ct, "p_max_w", "control", c.control.p_max);
  c.control.max_deviation = number_or(ct, "max_deviation_w", "control", c.control.max_deviation);
  c.control.outer_budget = count_or(ct, "outer_budget", "control", c.control.outer_budget);
  c.control.outer_init = count_or(ct, "outer_init", "control", c.control.outer_init);
  c.control.inner = c.margin;
  if (ct.contains("scenarios")) {
    const json& list = ct.at("scenarios");
    if (!list.is_array()) throw InvalidArgument("control.scenarios: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "control.scenarios[" + std::to_string(i) + "]";
      c.scenarios.push_back({require_number(list[i], "l_grid_mh", where) * 1e-3,
                             require_number(list[i], "p_set_w", where)});
    }
  } else {
    c.scenarios = {{12e-3, 2060.0}, {12e-3, 3040.0}};
  }
  for (std::size_t i = 0; i < c.scenarios.size(); ++i) {
    ControlConfig probe = c.control;
    probe.p_set = c.scenarios[i].p_set;
    with_context("control.scenarios[" + std::to_string(i) + "]", [&] {
      probe.validate();
      c.grid(c.scenarios[i].l_grid).validate();
    });
  }

  const json& an = section(input, "analysis");
  c.linkage = string_or(an, "linkage", "analysis", c.linkage);
  c.metric = string_or(an, "metric", "analysis", c.metric);
  c.vector_form = string_or(an, "form", "analysis", c.vector_form);
  with_context("analysis", [&] {
    parse_linkage(c.linkage);
    parse_metric(c.metric);
    parse_vector_form(c.vector_form);
  });
  if (an.contains("bode_workloads_w")) c.bode_workloads_w = parse_grid(an.at("bode_workloads_w"), "analysis.bode_workloads_w");
  c.demo_l_grid = number_or(an, "demo_l_grid_mh", "analysis", c.demo_l_grid * 1e3) * 1e-3;
  c.demo_workload_w = number_or(an, "demo_workload_w", "analysis", c.demo_workload_w);
  c.scan_workloads_w = an.contains("scan_workloads_w")
                           ? parse_grid(an.at("scan_workloads_w"), "analysis.scan_workloads_w")
                           : arithmetic_grid(800.0, 3600.0, 20.0);

  c.digest = sha256_hex(c.resolved.dump());
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file '" + path.string() + "' does not exist");
  const json tree = load_json_file(path);
  try {
    RunConfig c = run_config_from_json(tree, path.parent_path());
    c.source = path;
    return c;
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

std::filesystem::path resolve_output_dir(const RunConfig& config, const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("SSRGUARD_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

std::string provenance_comment(const RunConfig& config, const std::string& command) {
  return "ssrguard " + command + "\nconfig_sha256: " + config.digest;
}

}  // namespace ssrguard::cli
