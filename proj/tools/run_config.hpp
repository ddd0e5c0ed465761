#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssrguard/control.hpp"
#include "ssrguard/grid_stability.hpp"
#include "ssrguard/pfc_circuit.hpp"
#include "ssrguard/surrogate.hpp"
#include "ssrguard/sweep.hpp"

namespace ssrguard::cli {

struct ControlScenario {
  double l_grid = 0.0;  // H
  double p_set = 0.0;   // W
};

struct RunConfig {
  std::filesystem::path source;          // the config file itself
  nlohmann::json resolved;               // fully expanded tree (circuit inlined)
  std::string digest;                    // SHA-256 of resolved.dump()

  PfcParams circuit;
  std::filesystem::path output_dir = "out";

  SweepConfig sweep;
  std::vector<double> workloads_w;
  std::vector<double> frequencies_hz;
  std::string dataset_file = "dataset.csv";

  TrainingConfig training;
  std::vector<int> compare_hidden{16, 32, 16};
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::string model_file = "model.txt";

  double r_grid = 0.1;
  std::vector<double> l_grid_values{12e-3, 7e-3, 2e-3};
  std::size_t n_converters = 5;
  double w_g = 0.0;

  MarginSearchConfig margin;
  double threshold = 0.2;
  std::vector<double> assess_workloads_w;

  ControlConfig control;                 // p_set is filled per scenario
  std::vector<ControlScenario> scenarios;

  std::string linkage = "average";
  std::string metric = "euclidean";
  std::string vector_form = "rectangular";
  std::vector<double> bode_workloads_w{800.0, 3460.0};
  double demo_l_grid = 12e-3;
  double demo_workload_w = 800.0;
  std::vector<double> scan_workloads_w;

  GridModel grid(double l_grid) const { return {r_grid, l_grid, w_g}; }
};

/// Loads and validates a run configuration. Relative file references are
/// resolved against the config file's directory. Errors carry the field path.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& tree, const std::filesystem::path& base_dir);

/// Output directory precedence: explicit flag, then SSRGUARD_OUT_DIR, then the config.
std::filesystem::path resolve_output_dir(const RunConfig& config, const std::optional<std::string>& flag);

/// Provenance header embedded in every output file.
std::string provenance_comment(const RunConfig& config, const std::string& command);

/// Grid given either as an explicit list or as {first, last, step[, exclude]}.
std::vector<double> parse_grid(const nlohmann::json& node, const std::string& where);

}  // namespace ssrguard::cli
