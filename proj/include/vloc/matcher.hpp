#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "vloc/frame.hpp"

namespace vloc {

struct MatchOutcome {
  int n_kpm = 0;        // surviving keypoint match count, >= 0
  double desc_dist = 0.0;  // global descriptor distance, >= 0
};

// Appearance compatibility between condition pairs, symmetric in its
// arguments. Identical conditions default to 1.0, unknown cross pairs to
// cross_fallback.
struct CompatTable {
  std::map<std::pair<std::string, std::string>, double> pairs = {
      {{kNight, kSunny}, 0.2},
      {{kSnowy, kSunny}, 0.5},
      {{kNight, kSnowy}, 0.2},
  };
  double cross_fallback = 0.5;

  double factor(const std::string& a, const std::string& b) const;
};

struct SyntheticMatcherConfig {
  int n_max = 2000;
  double length_scale = 5.0;  // meters; match counts decay as exp(-d / this)
  CompatTable condition_compat;
  double noise_sigma = 0.4;  // log-space sigma of the multiplicative noise
  std::uint64_t rng_seed = 1234;
};

class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual MatchOutcome match(const Frame& query, const Frame& key) const = 0;
  virtual double global_distance(const Frame& query,
                                 const Frame& key) const = 0;
};

// Stand-in for a real keypoint matcher. Match counts are driven by the true
// pose distance, condition compatibility, corruption markers and seeded
// multiplicative noise; the pipeline never sees the distance itself.
class SyntheticMatcher : public Matcher {
 public:
  explicit SyntheticMatcher(SyntheticMatcherConfig cfg)
      : cfg_(std::move(cfg)) {}

  MatchOutcome match(const Frame& query, const Frame& key) const override;
  double global_distance(const Frame& query, const Frame& key) const override;

  const SyntheticMatcherConfig& config() const { return cfg_; }

 private:
  SyntheticMatcherConfig cfg_;
};

}  // namespace vloc
