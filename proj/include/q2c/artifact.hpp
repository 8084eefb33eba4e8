#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "q2c/predictor.hpp"
#include "q2c/router.hpp"

namespace q2c {

// Versioned JSON artifact formats. Serialization is key-sorted and doubles
// round-trip exactly, so identical inputs produce byte-identical files and
// reloaded banks reproduce predictions bit-for-bit.

inline constexpr const char* kBankFormat = "q2c.bank.v1";
inline constexpr const char* kCalibrationFormat = "q2c.calibration.v1";
inline constexpr const char* kPolicyFormat = "q2c.policy.v1";
inline constexpr const char* kPruneFormat = "q2c.prune.v1";
inline constexpr const char* kManifestFormat = "q2c.manifest.v1";

nlohmann::json bank_to_json(const PredictorBank& bank);
PredictorBank bank_from_json(const nlohmann::json& j);
void save_bank(const std::string& path, const PredictorBank& bank);
PredictorBank load_bank(const std::string& path);

nlohmann::json calibration_to_json(const CalibrationTable& table);
CalibrationTable calibration_from_json(const nlohmann::json& j);
void save_calibration(const std::string& path, const CalibrationTable& table);
CalibrationTable load_calibration(const std::string& path);

// The serving artifact: bank + optional calibration table + operating lambda
// + optional per-config knobs for route responses.
struct PolicyArtifact {
  RoutingPolicy policy;
  CalibrationTable calibration;
  bool has_calibration = false;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> knobs;
};

nlohmann::json policy_to_json(const PolicyArtifact& artifact);
PolicyArtifact policy_from_json(const nlohmann::json& j);
void save_policy(const std::string& path, const PolicyArtifact& artifact);
PolicyArtifact load_policy(const std::string& path);

}  // namespace q2c
