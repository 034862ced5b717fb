#include "vloc/geometry.hpp"

namespace vloc {

double wrap_angle(double a) {
  if (!std::isfinite(a)) {
    throw std::invalid_argument("wrap_angle: angle must be finite");
  }
  // remainder() lands in [-pi, pi]; fold the lower boundary onto +pi so the
  // result lies in the half-open interval (-pi, pi].
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

Eigen::Matrix2d rotation2(double heading) {
  if (!std::isfinite(heading)) {
    throw std::invalid_argument("rotation2: heading must be finite");
  }
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  return rot;
}

Cov2 rotate_cov(const Cov2& c, double heading) {
  if (!c.allFinite()) {
    throw NumericError("rotate_cov: covariance has non-finite entries");
  }
  const Eigen::Matrix2d rot = rotation2(heading);
  const Cov2 out = rot * c * rot.transpose();
  // The similarity transform is symmetric up to rounding; make it exact.
  return 0.5 * (out + out.transpose());
}

}  // namespace vloc
