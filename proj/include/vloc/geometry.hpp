#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "vloc/errors.hpp"

namespace vloc {

inline constexpr double kPi = 3.14159265358979323846;

// Smallest eigenvalue admitted after covariance repair. Keeps every repaired
// matrix strictly positive definite so Cholesky factorizations cannot fail.
inline constexpr double kPsdFloor = 1e-9;

using Cov2 = Eigen::Matrix2d;

// Planar pose; heading is stored in radians, normalized to (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Eigen::Vector2d position() const { return {x, y}; }
};

// Normalizes an angle into (-pi, pi]. Idempotent.
double wrap_angle(double a);

// 2x2 rotation matrix for the given heading.
Eigen::Matrix2d rotation2(double heading);

// R(heading) * c * R(heading)^T; preserves trace and determinant.
Cov2 rotate_cov(const Cov2& c, double heading);

// Symmetrizes m and clamps its eigenvalues to at least kPsdFloor. If the
// symmetrized matrix already satisfies the floor it is returned unchanged.
template <int N>
Eigen::Matrix<double, N, N> psd_repair(const Eigen::Matrix<double, N, N>& m) {
  if (!m.allFinite()) {
    throw NumericError("psd_repair: matrix has non-finite entries");
  }
  const Eigen::Matrix<double, N, N> sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericError("psd_repair: eigendecomposition failed");
  }
  if (es.eigenvalues().minCoeff() >= kPsdFloor) {
    return sym;
  }
  const Eigen::Matrix<double, N, 1> clamped =
      es.eigenvalues().cwiseMax(kPsdFloor);
  const Eigen::Matrix<double, N, N> r =
      es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

}  // namespace vloc
