#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <string>

#include "ssrguard/config.hpp"
#include "ssrguard/pfc_circuit.hpp"

namespace testing {

inline constexpr double kPi = std::numbers::pi;

inline std::filesystem::path source_dir() { return SSRGUARD_SOURCE_DIR; }

inline const ssrguard::PfcParams& default_params() {
  static const ssrguard::PfcParams p = ssrguard::load_pfc_params(source_dir() / "configs/pfc_3600w.json");
  return p;
}

inline double rel_err(std::complex<double> got, std::complex<double> want) {
  return std::abs(got - want) / std::abs(want);
}

inline double phase_err_deg(std::complex<double> got, std::complex<double> want) {
  return std::abs(std::arg(got / want)) * 180.0 / kPi;
}

// Empty scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ssrguard-unit-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
