#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vloc/geometry.hpp"

namespace vloc {

// Conditions are open-ended strings; these three have built-in appearance
// profiles and compatibility factors, anything else falls back to defaults.
inline const std::string kSunny = "sunny";
inline const std::string kNight = "night";
inline const std::string kSnowy = "snowy";

struct Frame {
  std::int64_t frame_id = 0;
  std::int64_t traversal_id = 0;
  double t = 0.0;
  Pose2 pose;
  std::string condition = kSunny;
  Eigen::VectorXd descriptor;
  std::uint64_t appearance_seed = 0;
  // Fraction of this frame's keypoint budget destroyed by sensor corruption;
  // 0 for clean frames. The synthetic matcher scales match counts by (1 - c).
  double corruption = 0.0;
};

struct Traversal {
  std::int64_t traversal_id = 0;
  std::vector<Frame> frames;

  // Enforces strictly increasing timestamps and consistent ownership ids.
  void validate() const;
};

}  // namespace vloc
