#include "vloc/matcher.hpp"

#include <algorithm>
#include <cmath>

#include "vloc/errors.hpp"
#include "vloc/rng.hpp"

namespace vloc {

double CompatTable::factor(const std::string& a, const std::string& b) const {
  const auto key = (a < b) ? std::make_pair(a, b) : std::make_pair(b, a);
  if (const auto it = pairs.find(key); it != pairs.end()) {
    return it->second;
  }
  return (a == b) ? 1.0 : cross_fallback;
}

double SyntheticMatcher::global_distance(const Frame& query,
                                         const Frame& key) const {
  if (query.descriptor.size() != key.descriptor.size()) {
    throw DataError("global_distance: descriptor length mismatch (" +
                    std::to_string(query.descriptor.size()) + " vs " +
                    std::to_string(key.descriptor.size()) + ")");
  }
  return (query.descriptor - key.descriptor).norm();
}

MatchOutcome SyntheticMatcher::match(const Frame& query,
                                     const Frame& key) const {
  MatchOutcome out;
  out.desc_dist = global_distance(query, key);

  const double d = (query.pose.position() - key.pose.position()).norm();
  const double compat =
      cfg_.condition_compat.factor(query.condition, key.condition);
  // Corruption destroys keypoints on whichever side carries the marker.
  const double survival = (1.0 - query.corruption) * (1.0 - key.corruption);

  double expected = static_cast<double>(cfg_.n_max) *
                    std::exp(-d / cfg_.length_scale) * compat * survival;
  if (cfg_.noise_sigma > 0.0) {
    // Keyed on both frame identities and appearance seeds: the same pair
    // always yields the same count, and remapping a frame's appearance seed
    // (as corruption does) decorrelates its noise from the clean original.
    const std::uint64_t key64 =
        rng::mix(cfg_.rng_seed,
                 rng::mix(static_cast<std::uint64_t>(query.frame_id),
                          static_cast<std::uint64_t>(key.frame_id)),
                 rng::mix(query.appearance_seed, key.appearance_seed));
    expected *= std::exp(cfg_.noise_sigma * rng::normal(key64));
  }

  const double rounded = std::round(expected);
  out.n_kpm = static_cast<int>(
      std::clamp(rounded, 0.0, static_cast<double>(cfg_.n_max)));
  return out;
}

}  // namespace vloc
