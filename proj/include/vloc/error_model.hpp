#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vloc/frame.hpp"
#include "vloc/geometry.hpp"
#include "vloc/matcher.hpp"
#include "vloc/retrieval.hpp"

namespace vloc {

// One cross-validated localization attempt against a single database.
struct CalibrationSample {
  int n_kpm = 0;
  double error_norm = 0.0;
  // World-frame residual (prediction minus truth) rotated by -heading of the
  // query frame: (longitudinal, lateral) in meters.
  Eigen::Vector2d error_ego = Eigen::Vector2d::Zero();
  std::int64_t query_traversal_id = 0;
  std::int64_t database_traversal_id = 0;
};

struct ErrorModelConfig {
  int bin_width = 200;       // keypoint-match counts per bin
  int min_bin_count = 20;    // bins with fewer samples are merged
  std::vector<double> confidence_grid;  // defaults to default_confidence_grid()

  std::vector<double> grid_or_default() const;
};

// 0.05, 0.10, ..., 0.95 plus 0.99.
std::vector<double> default_confidence_grid();

struct ModelBin {
  int lo = 0;                    // inclusive lower match-count edge
  std::optional<int> hi;         // exclusive upper edge; empty = open-ended
  std::int64_t count = 0;        // calibration samples that landed here
  std::vector<double> sigma;     // error quantiles, parallel to the grid
  Cov2 R_ego = Cov2::Identity(); // ego-frame measurement covariance

  bool contains(int n_kpm) const {
    return n_kpm >= lo && (!hi.has_value() || n_kpm < *hi);
  }
};

// Per-database sensor error model: contiguous match-count bins covering
// [0, inf), each holding a confidence-to-error curve and a 2x2 covariance.
struct SensorErrorModel {
  std::int64_t traversal_id = 0;
  std::vector<ModelBin> bins;
};

struct SensorErrorModelSet {
  int bin_width = 200;
  std::vector<double> confidence_grid;
  std::vector<SensorErrorModel> models;

  const SensorErrorModel& model_for(std::int64_t traversal_id) const;
};

// Leave-one-database-out calibration: every frame of every traversal is
// localized against each *other* traversal alone; samples are grouped by the
// database they were matched against. Requires at least two traversals.
std::map<std::int64_t, std::vector<CalibrationSample>> cross_validate(
    std::span<const Traversal> databases, const RetrievalConfig& retrieval,
    const Matcher& matcher);

// Half-open binning: bin i covers [i * bin_width, (i + 1) * bin_width).
int bin_index(int n_kpm, int bin_width);

// Smallest sample value v with count(errors <= v) / N >= c. c in (0, 1].
double empirical_sigma(std::vector<double> errors, double c);

SensorErrorModel fit_model(std::vector<CalibrationSample> samples,
                           std::int64_t traversal_id,
                           const ErrorModelConfig& cfg);

SensorErrorModelSet fit_model_set(
    const std::map<std::int64_t, std::vector<CalibrationSample>>& samples,
    const ErrorModelConfig& cfg);

const ModelBin& lookup_bin(const SensorErrorModelSet& set,
                           std::int64_t traversal_id, int n_kpm);

// (sigma_c, R_ego) for the model selected by the prediction's source
// traversal and match count. c snaps up to the nearest calibrated grid point.
std::pair<double, Cov2> lookup(const SensorErrorModelSet& set,
                               const Prediction& prediction, double c);

// Lossless JSON round trip (floats survive bit-exactly).
std::string serialize_model_set(const SensorErrorModelSet& set);
SensorErrorModelSet deserialize_model_set(const std::string& text);

}  // namespace vloc
