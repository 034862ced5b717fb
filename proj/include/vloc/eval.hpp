#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vloc/error_model.hpp"
#include "vloc/frame.hpp"
#include "vloc/matcher.hpp"
#include "vloc/retrieval.hpp"
#include "vloc/ukf.hpp"

namespace vloc::eval {

// Coverage targets of the 1/2/3-sigma covariance ellipses.
inline constexpr std::array<double, 3> kCredibilityMasses{0.68, 0.95, 0.997};

// Everything the filter and the evaluation need about one query frame. The
// ground-truth pose is carried for scoring only and never reaches the filter.
struct MeasurementBundle {
  std::int64_t frame_id = 0;
  double t = 0.0;
  Pose2 gt;
  Eigen::Vector2d meas = Eigen::Vector2d::Zero();
  std::int64_t source_traversal_id = 0;
  std::int64_t source_frame_id = 0;
  int n_kpm = 0;
  double desc_dist = 0.0;
  std::vector<double> sigma;  // calibrated error bounds, parallel to the grid
  Cov2 R_ego = Cov2::Identity();
};

struct TraversalRun {
  std::int64_t query_traversal_id = 0;
  std::string condition;
  std::vector<double> grid;
  std::vector<MeasurementBundle> bundles;
};

struct TrajectoryRecord {
  std::int64_t query_traversal_id = 0;
  std::int64_t frame_id = 0;
  double t = 0.0;
  Eigen::Vector2d meas = Eigen::Vector2d::Zero();
  std::int64_t source_traversal_id = 0;
  std::int64_t source_frame_id = 0;
  int n_kpm = 0;
  std::vector<double> sigma;
  Cov2 R_world = Cov2::Zero();
  bool accepted = false;
  std::optional<double> d2;
  bool initialized = false;
  ukf::Vec5 est_mean = ukf::Vec5::Zero();
  ukf::Mat5 est_cov = ukf::Mat5::Zero();
};

struct ReliabilityPoint {
  double c = 0.0;
  double p_hat = 0.0;
  std::int64_t n = 0;
};

struct MetricBlock {
  double d_err = 0.0;                      // mean post-update position error
  std::array<double, 3> credibility{};    // percent inside 1/2/3-sigma
  double n_r = 0.0;                        // percent of gated rejections
  std::int64_t n_measurements = 0;
  std::int64_t n_gated = 0;
  std::int64_t n_rejected = 0;
  std::vector<ReliabilityPoint> reliability;
};

struct EvalReport {
  std::vector<double> grid;
  MetricBlock overall;
  std::map<std::string, MetricBlock> per_condition;
};

// Retrieval plus error-model lookup for every frame of a query traversal.
TraversalRun compute_measurements(const Traversal& query,
                                  std::span<const Traversal> databases,
                                  const SensorErrorModelSet& models,
                                  const RetrievalConfig& retrieval,
                                  const Matcher& matcher);

// Feeds the bundles through the localization filter in timestamp order.
std::vector<TrajectoryRecord> run_filter(const TraversalRun& run,
                                         const ukf::FilterConfig& filter_cfg);

// Fraction of queries whose error is within the calibrated bound, per grid
// confidence. errors and sigma rows are parallel.
std::vector<ReliabilityPoint> reliability(
    const std::vector<double>& errors,
    const std::vector<std::vector<double>>& sigma,
    const std::vector<double>& grid);

// Percent of errors inside the covariance ellipses at kCredibilityMasses.
std::array<double, 3> covariance_credibility(
    const std::vector<Eigen::Vector2d>& errors, const std::vector<Cov2>& covs);

EvalReport build_report(const std::vector<TraversalRun>& runs,
                        const std::vector<std::vector<TrajectoryRecord>>& records);

struct ExperimentResult {
  EvalReport report;
  std::vector<TraversalRun> runs;
  std::vector<std::vector<TrajectoryRecord>> records;
};

ExperimentResult run_experiment(std::span<const Traversal> databases,
                                std::span<const Traversal> queries,
                                const SensorErrorModelSet& models,
                                const RetrievalConfig& retrieval,
                                const Matcher& matcher,
                                const ukf::FilterConfig& filter_cfg);

// Grid-searches a constant isotropic measurement covariance (0.25 to 1024
// square meters in octaves) that minimizes mean error on the validation
// runs; ties go to the smaller variance.
Cov2 constant_covariance_baseline(const std::vector<TraversalRun>& validation,
                                  ukf::FilterConfig filter_cfg,
                                  double* chosen_sigma2 = nullptr);

}  // namespace vloc::eval
