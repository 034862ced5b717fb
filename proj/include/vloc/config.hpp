#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vloc/error_model.hpp"
#include "vloc/matcher.hpp"
#include "vloc/retrieval.hpp"
#include "vloc/synth.hpp"
#include "vloc/ukf.hpp"

namespace vloc {

struct PathsConfig {
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path model_file = "model.json";
  std::filesystem::path trajectory_file = "trajectory.jsonl";
  std::filesystem::path report_dir = "report";
};

struct BaselineConfig {
  std::string method = "adaptive";  // "adaptive" | "constant"
  std::optional<double> sigma2;     // isotropic variance, required by constant
};

// One document drives all four commands; each uses the slice it needs.
struct RunConfig {
  PathsConfig paths;
  std::uint64_t seed = 7;  // master seed for the scenario
  synth::ScenarioConfig scenario;
  std::vector<synth::CorruptionSpec> corruptions;  // applied to queries only
  SyntheticMatcherConfig matcher;
  RetrievalConfig retrieval;
  ErrorModelConfig error_model;
  ukf::FilterConfig filter;    // gate carried separately as text
  std::string gate = "0.99";   // "off" or a confidence strictly inside (0, 1)
  BaselineConfig baseline;

  // Parsed form of `gate`; nullopt when gating is off.
  std::optional<double> gate_alpha() const;
  // Filter configuration with the gate and baseline covariance resolved.
  ukf::FilterConfig resolved_filter() const;
  void validate() const;
};

// Parses a config document; `origin` labels error messages (file name or
// "--set"). Unknown keys are rejected to catch typos early.
RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config(const std::filesystem::path& path);

// Serializes with stable field ordering; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace vloc
