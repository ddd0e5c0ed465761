#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ssrguard/pfc_circuit.hpp"

namespace ssrguard {

/// Circuit parameters from a JSON key/value tree. Every field is required;
/// errors name the offending key.
PfcParams pfc_params_from_json(const nlohmann::json& tree);
PfcParams load_pfc_params(const std::filesystem::path& path);
nlohmann::json pfc_params_to_json(const PfcParams& params);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Typed lookup with a field path in the error message.
double require_number(const nlohmann::json& tree, const std::string& key, const std::string& context);

}  // namespace ssrguard
