#include "vloc/ukf.hpp"

#include <cmath>
#include <stdexcept>

#include "vloc/errors.hpp"

namespace vloc::ukf {

namespace {

// Position measurement model: H picks the first two state components.
Eigen::Vector2d project(const Vec5& x) { return x.head<2>(); }

Cov2 invert2(const Cov2& s) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw NumericError("innovation covariance is singular");
  }
  Cov2 inv;
  inv << s(1, 1), -s(0, 1), -s(1, 0), s(0, 0);
  return inv / det;
}

}  // namespace

double UtParams::lambda() const {
  const double n = static_cast<double>(kStateDim);
  return alpha_ut * alpha_ut * (n + kappa) - n;
}

void UtParams::validate() const {
  if (!std::isfinite(alpha_ut) || !std::isfinite(beta_ut) ||
      !std::isfinite(kappa) || alpha_ut <= 0.0) {
    throw std::invalid_argument("UtParams: parameters must be finite, alpha > 0");
  }
  if (static_cast<double>(kStateDim) + lambda() <= 0.0) {
    throw std::invalid_argument("UtParams: n + lambda must be positive");
  }
}

std::array<double, kNumSigmaPoints> UtParams::weights_mean() const {
  const double n = static_cast<double>(kStateDim);
  const double l = lambda();
  std::array<double, kNumSigmaPoints> w;
  w[0] = l / (n + l);
  for (int i = 1; i < kNumSigmaPoints; ++i) {
    w[i] = 0.5 / (n + l);
  }
  return w;
}

std::array<double, kNumSigmaPoints> UtParams::weights_cov() const {
  auto w = weights_mean();
  w[0] += 1.0 - alpha_ut * alpha_ut + beta_ut;
  return w;
}

SigmaMatrix sigma_points(const FilterState& state, const UtParams& params) {
  params.validate();
  if (!state.mean.allFinite()) {
    throw NumericError("sigma_points: state mean has non-finite entries");
  }
  const Mat5 cov = psd_repair<5>(state.cov);
  const double scale = static_cast<double>(kStateDim) + params.lambda();

  Eigen::LLT<Mat5> llt(Mat5(scale * cov));
  if (llt.info() != Eigen::Success) {
    throw NumericError("sigma_points: Cholesky factorization failed");
  }
  const Mat5 root = llt.matrixL();

  SigmaMatrix pts;
  pts.col(0) = state.mean;
  for (int i = 0; i < kStateDim; ++i) {
    pts.col(1 + i) = state.mean + root.col(i);
    pts.col(1 + kStateDim + i) = state.mean - root.col(i);
  }
  return pts;
}

FilterState predict(const FilterState& state, double dt, const Mat5& Q,
                    const UtParams& params) {
  if (!std::isfinite(dt) || dt <= 0.0) {
    throw std::invalid_argument("predict: dt must be positive");
  }
  if (!Q.allFinite()) {
    throw NumericError("predict: process noise has non-finite entries");
  }

  SigmaMatrix pts = sigma_points(state, params);
  for (int i = 0; i < kNumSigmaPoints; ++i) {
    const double theta = pts(2, i);
    const double v = pts(3, i);
    const double theta_dot = pts(4, i);
    pts(0, i) += v * std::cos(theta) * dt;
    pts(1, i) += v * std::sin(theta) * dt;
    pts(2, i) = wrap_angle(theta + theta_dot * dt);
  }

  const auto wm = params.weights_mean();
  const auto wc = params.weights_cov();

  FilterState out;
  out.t = state.t + dt;
  // Heading is recombined on the circle; plain weighted sums would tear at
  // the +-pi seam.
  double sin_sum = 0.0;
  double cos_sum = 0.0;
  Vec5 mean = Vec5::Zero();
  for (int i = 0; i < kNumSigmaPoints; ++i) {
    mean += wm[i] * pts.col(i);
    sin_sum += wm[i] * std::sin(pts(2, i));
    cos_sum += wm[i] * std::cos(pts(2, i));
  }
  mean(2) = std::atan2(sin_sum, cos_sum);
  mean(2) = wrap_angle(mean(2));
  out.mean = mean;

  Mat5 cov = Mat5::Zero();
  for (int i = 0; i < kNumSigmaPoints; ++i) {
    Vec5 r = pts.col(i) - mean;
    r(2) = wrap_angle(r(2));
    cov += wc[i] * r * r.transpose();
  }
  out.cov = psd_repair<5>(Mat5(cov + Q));
  return out;
}

double mahalanobis_sq(const FilterState& state, const Measurement& meas) {
  if (!meas.z.allFinite() || !meas.R_world.allFinite()) {
    throw NumericError("mahalanobis_sq: measurement has non-finite entries");
  }
  const Eigen::Vector2d nu = meas.z - project(state.mean);
  const Cov2 S = state.cov.topLeftCorner<2, 2>() + meas.R_world;
  return nu.dot(invert2(S) * nu);
}

double chi2_threshold(int k, double alpha) {
  if (k != 2) {
    throw std::invalid_argument("chi2_threshold: only k = 2 is supported");
  }
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("chi2_threshold: alpha must be in (0, 1)");
  }
  return -2.0 * std::log1p(-alpha);
}

UpdateResult update(const FilterState& state, const Measurement& meas,
                    const GateConfig& gate, const UtParams& params) {
  UpdateResult res;
  res.state = state;
  res.d2 = mahalanobis_sq(state, meas);
  if (gate.alpha.has_value() && res.d2 > chi2_threshold(2, *gate.alpha)) {
    res.accepted = false;
    return res;
  }

  const SigmaMatrix pts = sigma_points(state, params);
  const auto wm = params.weights_mean();
  const auto wc = params.weights_cov();

  Eigen::Vector2d z_hat = Eigen::Vector2d::Zero();
  for (int i = 0; i < kNumSigmaPoints; ++i) {
    z_hat += wm[i] * project(pts.col(i));
  }

  Cov2 S = meas.R_world;
  Eigen::Matrix<double, kStateDim, 2> cross =
      Eigen::Matrix<double, kStateDim, 2>::Zero();
  for (int i = 0; i < kNumSigmaPoints; ++i) {
    const Eigen::Vector2d dz = project(pts.col(i)) - z_hat;
    Vec5 dx = pts.col(i) - state.mean;
    dx(2) = wrap_angle(dx(2));
    S += wc[i] * dz * dz.transpose();
    cross += wc[i] * dx * dz.transpose();
  }

  const Eigen::Matrix<double, kStateDim, 2> K = cross * invert2(S);
  const Eigen::Vector2d nu = meas.z - z_hat;

  res.state.mean = state.mean + K * nu;
  res.state.mean(2) = wrap_angle(res.state.mean(2));
  res.state.cov = psd_repair<5>(Mat5(state.cov - K * S * K.transpose()));
  res.accepted = true;
  return res;
}

LocalizationFilter::LocalizationFilter(FilterConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.ut.validate();
  if (cfg_.gate.alpha.has_value()) {
    chi2_threshold(2, *cfg_.gate.alpha);  // validates the range
  }
  if (!cfg_.process_noise_rate.allFinite() ||
      (cfg_.process_noise_rate.array() < 0.0).any()) {
    throw std::invalid_argument(
        "LocalizationFilter: process noise rates must be finite and >= 0");
  }
  if (!(cfg_.init_heading_sigma > 0.0) || !(cfg_.init_speed_sigma > 0.0) ||
      !(cfg_.init_turn_rate_sigma > 0.0)) {
    throw std::invalid_argument(
        "LocalizationFilter: init sigmas must be positive");
  }
}

LocalizationFilter::Step LocalizationFilter::process(double t,
                                                     const Eigen::Vector2d& z,
                                                     const Cov2& R_ego,
                                                     double sigma68) {
  const auto resolve_R = [this, &R_ego](double heading) {
    return cfg_.constant_R.has_value() ? *cfg_.constant_R
                                       : rotate_cov(R_ego, heading);
  };

  Step step;
  if (!state_.has_value()) {
    if (!first_.has_value()) {
      first_ = {t, z};
      step.accepted = true;
      step.R_world_used = resolve_R(0.0);
      return step;
    }
    if (t <= first_->first) {
      return step;  // out of order before initialization completes
    }
    // Two fixes bootstrap the full state: position from the newer one,
    // heading from their offset, zero speed and turn rate with wide priors.
    const Eigen::Vector2d delta = z - first_->second;
    const double theta0 = std::atan2(delta.y(), delta.x());
    FilterState init;
    init.mean << z.x(), z.y(), theta0, 0.0, 0.0;
    Vec5 var;
    var << sigma68 * sigma68, sigma68 * sigma68,
        cfg_.init_heading_sigma * cfg_.init_heading_sigma,
        cfg_.init_speed_sigma * cfg_.init_speed_sigma,
        cfg_.init_turn_rate_sigma * cfg_.init_turn_rate_sigma;
    init.cov = psd_repair<5>(Mat5(var.asDiagonal()));
    init.t = t;
    state_ = init;
    step.accepted = true;
    step.initialized = true;
    step.R_world_used = resolve_R(theta0);
    return step;
  }

  step.initialized = true;
  if (t <= state_->t) {
    return step;  // stale timestamp; no retrodiction
  }

  const double dt = t - state_->t;
  const Mat5 Q = Mat5(Vec5(cfg_.process_noise_rate * dt).asDiagonal());
  const FilterState predicted = predict(*state_, dt, Q, cfg_.ut);

  const Cov2 R = resolve_R(predicted.mean(2));
  Measurement meas;
  meas.z = z;
  meas.R_world = R;
  meas.t = t;

  const UpdateResult res = update(predicted, meas, cfg_.gate, cfg_.ut);
  state_ = res.state;  // prediction advances even when the update is rejected
  step.accepted = res.accepted;
  step.d2 = res.d2;
  step.R_world_used = R;

  if (res.accepted) {
    rejection_streak_ = 0;
  } else {
    ++rejection_streak_;
    if (cfg_.reinit_after_rejections > 0 &&
        rejection_streak_ >= cfg_.reinit_after_rejections) {
      // The track has stopped absorbing evidence; drop it and let the
      // rejected measurement start the next two-fix bootstrap.
      state_.reset();
      first_ = {t, z};
      rejection_streak_ = 0;
      step.initialized = false;
    }
  }
  return step;
}

}  // namespace vloc::ukf
