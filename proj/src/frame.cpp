#include "vloc/frame.hpp"

#include <cmath>

#include "vloc/errors.hpp"

namespace vloc {

void Traversal::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    if (f.traversal_id != traversal_id) {
      throw DataError("traversal " + std::to_string(traversal_id) +
                      ": frame " + std::to_string(f.frame_id) +
                      " carries traversal_id " +
                      std::to_string(f.traversal_id));
    }
    if (!std::isfinite(f.t) || !std::isfinite(f.pose.x) ||
        !std::isfinite(f.pose.y) || !std::isfinite(f.pose.heading)) {
      throw DataError("traversal " + std::to_string(traversal_id) +
                      ": frame " + std::to_string(f.frame_id) +
                      " has non-finite fields");
    }
    if (i > 0 && !(frames[i - 1].t < f.t)) {
      throw DataError("traversal " + std::to_string(traversal_id) +
                      ": timestamps not strictly increasing at frame " +
                      std::to_string(f.frame_id));
    }
    if (f.corruption < 0.0 || f.corruption > 1.0) {
      throw DataError("traversal " + std::to_string(traversal_id) +
                      ": corruption outside [0, 1] at frame " +
                      std::to_string(f.frame_id));
    }
  }
}

}  // namespace vloc
