#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vloc/error_model.hpp"
#include "vloc/eval.hpp"
#include "vloc/frame.hpp"
#include "vloc/synth.hpp"

namespace vloc::io {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// One frame per line:
// {"frame_id":..,"traversal_id":..,"t":..,"x":..,"y":..,"heading":..,
//  "condition":..,"descriptor":[..],"appearance_seed":..,"corruption":..}
void write_traversal(const std::filesystem::path& path, const Traversal& t);
Traversal read_traversal(const std::filesystem::path& path);

struct ManifestEntry {
  std::int64_t traversal_id = 0;
  std::string condition;
  std::string role;  // "database" or "query"
  std::int64_t count = 0;
  std::string file;
  std::uint64_t seed = 0;
  std::vector<synth::CorruptionSpec> corruptions;
};

struct Manifest {
  std::uint64_t seed = 0;
  double route_length = 0.0;
  std::vector<ManifestEntry> traversals;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct Dataset {
  Manifest manifest;
  std::vector<Traversal> databases;
  std::vector<Traversal> queries;

  const std::string& condition_of(std::int64_t traversal_id) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

void write_model_file(const std::filesystem::path& path,
                      const SensorErrorModelSet& set);
SensorErrorModelSet read_model_file(const std::filesystem::path& path);

struct TrajectoryFile {
  std::vector<double> grid;
  std::vector<eval::TrajectoryRecord> records;
};

void write_trajectory(const std::filesystem::path& path,
                      const std::vector<double>& grid,
                      const std::vector<std::vector<eval::TrajectoryRecord>>& records);
TrajectoryFile read_trajectory(const std::filesystem::path& path);

void write_report_json(const std::filesystem::path& path,
                       const eval::EvalReport& report);
void write_report_csv(const std::filesystem::path& path,
                      const eval::EvalReport& report);
void write_reliability_csv(const std::filesystem::path& path,
                           const eval::EvalReport& report);

}  // namespace vloc::io
