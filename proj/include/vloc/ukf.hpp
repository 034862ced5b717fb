#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>

#include "vloc/geometry.hpp"

namespace vloc::ukf {

// State layout: [x, y, heading, speed, turn_rate].
inline constexpr int kStateDim = 5;
inline constexpr int kNumSigmaPoints = 2 * kStateDim + 1;

using Vec5 = Eigen::Matrix<double, kStateDim, 1>;
using Mat5 = Eigen::Matrix<double, kStateDim, kStateDim>;
using SigmaMatrix = Eigen::Matrix<double, kStateDim, kNumSigmaPoints>;

struct FilterState {
  Vec5 mean = Vec5::Zero();
  Mat5 cov = Mat5::Identity();
  double t = 0.0;
};

struct UtParams {
  double alpha_ut = 1.0;
  double beta_ut = 2.0;
  double kappa = static_cast<double>(3 - kStateDim);

  double lambda() const;
  std::array<double, kNumSigmaPoints> weights_mean() const;
  std::array<double, kNumSigmaPoints> weights_cov() const;
  void validate() const;
};

struct Measurement {
  Eigen::Vector2d z = Eigen::Vector2d::Zero();  // planar position, meters
  Cov2 R_world = Cov2::Identity();
  double t = 0.0;
  std::int64_t source_traversal_id = 0;
  int n_kpm = 0;
};

// Absent alpha disables gating entirely.
struct GateConfig {
  std::optional<double> alpha;
};

struct UpdateResult {
  FilterState state;
  bool accepted = false;
  double d2 = 0.0;  // squared Mahalanobis distance of the innovation
};

// 2n+1 points: the mean plus +-columns of the scaled covariance square root.
SigmaMatrix sigma_points(const FilterState& state, const UtParams& params);

// Constant-velocity propagation through the unscented transform; the heading
// mean is recombined via atan2 over weighted sin/cos. Q is added as given.
FilterState predict(const FilterState& state, double dt, const Mat5& Q,
                    const UtParams& params = UtParams());

// (z - z_hat)^T (H C H^T + R)^-1 (z - z_hat) with H selecting (x, y).
double mahalanobis_sq(const FilterState& state, const Measurement& meas);

// Chi-squared quantile for k degrees of freedom at confidence alpha. Only
// k = 2 is supported, where the closed form is -2 ln(1 - alpha).
double chi2_threshold(int k, double alpha);

// Gated position update. A rejected measurement returns the input state
// bit-identically with accepted = false.
UpdateResult update(const FilterState& state, const Measurement& meas,
                    const GateConfig& gate, const UtParams& params = UtParams());

struct FilterConfig {
  UtParams ut;
  // Process noise variance accumulated per second of prediction, one entry
  // per state component. The speed rate stays small so that the posterior
  // cannot balloon while the filter coasts through stretches of
  // near-uninformative measurements.
  Vec5 process_noise_rate =
      (Vec5() << 1e-4, 1e-4, 1e-4, 0.02, 0.01).finished();
  GateConfig gate;
  // Prior standard deviations for the components the two-fix bootstrap does
  // not observe. Position priors come from the measurement's sigma68.
  double init_heading_sigma = kPi / 4.0;
  double init_speed_sigma = 5.0;
  double init_turn_rate_sigma = 0.5;
  // Consecutive gate rejections that discard the track and re-bootstrap from
  // the next measurements; values <= 0 disable the reset.
  int reinit_after_rejections = 10;
  // Baseline mode: replaces every measurement covariance with this constant.
  std::optional<Cov2> constant_R;
};

// Drives the filter over a timestamp-ordered measurement stream. The first
// measurement pins (x, y); the second adds the heading from their offset and
// completes initialization. Prediction advances on every timestamp whether or
// not the measurement is accepted; stale timestamps are rejected outright.
// A run of reinit_after_rejections consecutive gate rejections discards the
// track, and the rejected measurement seeds the next bootstrap.
class LocalizationFilter {
 public:
  explicit LocalizationFilter(FilterConfig cfg);

  struct Step {
    bool accepted = false;
    std::optional<double> d2;
    Cov2 R_world_used = Cov2::Zero();
    bool initialized = false;  // a full state exists after this step
  };

  // sigma68 is the calibrated 68% error bound for this measurement; it only
  // shapes the initial covariance.
  Step process(double t, const Eigen::Vector2d& z, const Cov2& R_ego,
               double sigma68);

  const std::optional<FilterState>& state() const { return state_; }

 private:
  FilterConfig cfg_;
  std::optional<FilterState> state_;
  std::optional<std::pair<double, Eigen::Vector2d>> first_;
  int rejection_streak_ = 0;
};

}  // namespace vloc::ukf
