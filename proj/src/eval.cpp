#include "vloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vloc/errors.hpp"

namespace vloc::eval {

namespace {

std::size_t grid_index_at_least(const std::vector<double>& grid, double c) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] >= c - 1e-12) {
      return i;
    }
  }
  return grid.size() - 1;
}

struct Accumulator {
  std::vector<double> meas_errors;
  std::vector<std::vector<double>> meas_sigma;
  std::vector<Eigen::Vector2d> est_errors;
  std::vector<Cov2> est_covs;
  double err_sum = 0.0;
  std::int64_t n_state = 0;
  std::int64_t n_measurements = 0;
  std::int64_t n_gated = 0;
  std::int64_t n_rejected = 0;

  void add(const MeasurementBundle& b, const TrajectoryRecord& r) {
    n_measurements += 1;
    meas_errors.push_back((b.meas - b.gt.position()).norm());
    meas_sigma.push_back(b.sigma);
    if (r.d2.has_value()) {
      n_gated += 1;
      if (!r.accepted) {
        n_rejected += 1;
      }
    }
    if (r.initialized) {
      const Eigen::Vector2d e = r.est_mean.head<2>() - b.gt.position();
      err_sum += e.norm();
      n_state += 1;
      est_errors.push_back(e);
      est_covs.push_back(r.est_cov.topLeftCorner<2, 2>());
    }
  }

  MetricBlock finish(const std::vector<double>& grid) const {
    MetricBlock m;
    m.n_measurements = n_measurements;
    m.n_gated = n_gated;
    m.n_rejected = n_rejected;
    m.d_err = (n_state > 0) ? err_sum / static_cast<double>(n_state) : 0.0;
    m.n_r = (n_gated > 0) ? 100.0 * static_cast<double>(n_rejected) /
                                static_cast<double>(n_gated)
                          : 0.0;
    m.credibility = est_errors.empty()
                        ? std::array<double, 3>{0.0, 0.0, 0.0}
                        : covariance_credibility(est_errors, est_covs);
    m.reliability = reliability(meas_errors, meas_sigma, grid);
    return m;
  }
};

}  // namespace

TraversalRun compute_measurements(const Traversal& query,
                                  std::span<const Traversal> databases,
                                  const SensorErrorModelSet& models,
                                  const RetrievalConfig& retrieval,
                                  const Matcher& matcher) {
  TraversalRun run;
  run.query_traversal_id = query.traversal_id;
  run.condition = query.frames.empty() ? std::string() : query.frames.front().condition;
  run.grid = models.confidence_grid;
  run.bundles.reserve(query.frames.size());

  for (const Frame& q : query.frames) {
    const Prediction pred = predict_location(q, databases, retrieval, matcher);
    const ModelBin& bin =
        lookup_bin(models, pred.source_traversal_id, pred.n_kpm);

    MeasurementBundle b;
    b.frame_id = q.frame_id;
    b.t = q.t;
    b.gt = q.pose;
    b.meas = pred.predicted_location;
    b.source_traversal_id = pred.source_traversal_id;
    b.source_frame_id = pred.source_frame_id;
    b.n_kpm = pred.n_kpm;
    b.desc_dist = pred.desc_dist;
    b.sigma = bin.sigma;
    b.R_ego = bin.R_ego;
    run.bundles.push_back(std::move(b));
  }
  return run;
}

std::vector<TrajectoryRecord> run_filter(const TraversalRun& run,
                                         const ukf::FilterConfig& filter_cfg) {
  const std::size_t i68 = grid_index_at_least(run.grid, 0.68);
  ukf::LocalizationFilter filter(filter_cfg);

  std::vector<TrajectoryRecord> records;
  records.reserve(run.bundles.size());
  for (const MeasurementBundle& b : run.bundles) {
    const ukf::LocalizationFilter::Step step =
        filter.process(b.t, b.meas, b.R_ego, b.sigma[i68]);

    TrajectoryRecord r;
    r.query_traversal_id = run.query_traversal_id;
    r.frame_id = b.frame_id;
    r.t = b.t;
    r.meas = b.meas;
    r.source_traversal_id = b.source_traversal_id;
    r.source_frame_id = b.source_frame_id;
    r.n_kpm = b.n_kpm;
    r.sigma = b.sigma;
    r.R_world = step.R_world_used;
    r.accepted = step.accepted;
    r.d2 = step.d2;
    r.initialized = step.initialized;
    if (step.initialized) {
      r.est_mean = filter.state()->mean;
      r.est_cov = filter.state()->cov;
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ReliabilityPoint> reliability(
    const std::vector<double>& errors,
    const std::vector<std::vector<double>>& sigma,
    const std::vector<double>& grid) {
  if (errors.empty()) {
    throw DataError("reliability: no queries to evaluate");
  }
  if (errors.size() != sigma.size()) {
    throw std::invalid_argument("reliability: errors and sigma differ in size");
  }
  std::vector<ReliabilityPoint> curve;
  curve.reserve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (sigma[i].size() != grid.size()) {
        throw std::invalid_argument(
            "reliability: sigma row does not match the grid");
      }
      if (errors[i] <= sigma[i][g]) {
        hits += 1;
      }
    }
    curve.push_back({grid[g],
                     static_cast<double>(hits) / static_cast<double>(errors.size()),
                     static_cast<std::int64_t>(errors.size())});
  }
  return curve;
}

std::array<double, 3> covariance_credibility(
    const std::vector<Eigen::Vector2d>& errors,
    const std::vector<Cov2>& covs) {
  if (errors.empty() || errors.size() != covs.size()) {
    throw std::invalid_argument(
        "covariance_credibility: need matching, non-empty errors and covs");
  }
  std::array<double, 3> out{};
  for (std::size_t k = 0; k < kCredibilityMasses.size(); ++k) {
    // Chi-squared quantile with two degrees of freedom at this mass.
    const double thresh = -2.0 * std::log1p(-kCredibilityMasses[k]);
    std::int64_t inside = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      const Cov2& c = covs[i];
      const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
      if (!(det > 0.0) || !std::isfinite(det)) {
        throw NumericError("covariance_credibility: singular covariance");
      }
      const Eigen::Vector2d& e = errors[i];
      const double d2 = (c(1, 1) * e.x() * e.x() - 2.0 * c(0, 1) * e.x() * e.y() +
                         c(0, 0) * e.y() * e.y()) /
                        det;
      if (d2 <= thresh) {
        inside += 1;
      }
    }
    out[k] = 100.0 * static_cast<double>(inside) /
             static_cast<double>(errors.size());
  }
  return out;
}

EvalReport build_report(
    const std::vector<TraversalRun>& runs,
    const std::vector<std::vector<TrajectoryRecord>>& records) {
  if (runs.empty() || runs.size() != records.size()) {
    throw std::invalid_argument("build_report: runs and records must match");
  }
  EvalReport report;
  report.grid = runs.front().grid;

  Accumulator overall;
  std::map<std::string, Accumulator> by_condition;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].bundles.size() != records[i].size()) {
      throw DataError("build_report: trajectory does not match its run");
    }
    for (std::size_t j = 0; j < records[i].size(); ++j) {
      if (runs[i].bundles[j].frame_id != records[i][j].frame_id) {
        throw DataError("build_report: mismatched frame ids");
      }
      overall.add(runs[i].bundles[j], records[i][j]);
      by_condition[runs[i].condition].add(runs[i].bundles[j], records[i][j]);
    }
  }
  report.overall = overall.finish(report.grid);
  for (const auto& [condition, acc] : by_condition) {
    report.per_condition[condition] = acc.finish(report.grid);
  }
  return report;
}

ExperimentResult run_experiment(std::span<const Traversal> databases,
                                std::span<const Traversal> queries,
                                const SensorErrorModelSet& models,
                                const RetrievalConfig& retrieval,
                                const Matcher& matcher,
                                const ukf::FilterConfig& filter_cfg) {
  if (queries.empty()) {
    throw DataError("run_experiment: no query traversals");
  }
  ExperimentResult result;
  for (const Traversal& q : queries) {
    result.runs.push_back(
        compute_measurements(q, databases, models, retrieval, matcher));
    result.records.push_back(run_filter(result.runs.back(), filter_cfg));
  }
  result.report = build_report(result.runs, result.records);
  return result;
}

Cov2 constant_covariance_baseline(const std::vector<TraversalRun>& validation,
                                  ukf::FilterConfig filter_cfg,
                                  double* chosen_sigma2) {
  if (validation.empty()) {
    throw DataError("constant_covariance_baseline: no validation runs");
  }
  double best_sigma2 = 0.0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 12; ++k) {
    const double sigma2 = 0.25 * std::pow(2.0, static_cast<double>(k));
    filter_cfg.constant_R = Cov2(sigma2 * Cov2::Identity());

    double err_sum = 0.0;
    std::int64_t n = 0;
    for (const TraversalRun& run : validation) {
      const auto records = run_filter(run, filter_cfg);
      for (std::size_t j = 0; j < records.size(); ++j) {
        if (!records[j].initialized) {
          continue;
        }
        err_sum += (records[j].est_mean.head<2>() -
                    run.bundles[j].gt.position())
                       .norm();
        n += 1;
      }
    }
    const double d_err =
        (n > 0) ? err_sum / static_cast<double>(n)
                : std::numeric_limits<double>::infinity();
    if (d_err < best_err) {
      best_err = d_err;
      best_sigma2 = sigma2;
    }
  }
  if (!std::isfinite(best_err)) {
    throw DataError("constant_covariance_baseline: validation runs too short");
  }
  if (chosen_sigma2 != nullptr) {
    *chosen_sigma2 = best_sigma2;
  }
  return Cov2(best_sigma2 * Cov2::Identity());
}

}  // namespace vloc::eval
