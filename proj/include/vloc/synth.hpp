#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vloc/frame.hpp"

namespace vloc::synth {

inline constexpr int kDescriptorDim = 16;

// Piecewise-linear route through at least two distinct waypoints.
struct RouteSpec {
  std::vector<Eigen::Vector2d> waypoints;

  void validate() const;
  double total_length() const;
  // Point and tangent heading at arclength s, clamped to [0, total_length].
  std::pair<Eigen::Vector2d, double> sample(double s) const;
};

struct TraversalSpec {
  std::string condition = kSunny;
  double sample_spacing = 1.0;        // meters between consecutive frames
  // Per-frame noise dominates the constant per-traversal offset: the frame
  // poses behave like independent draws around the route, which is what a
  // filter consuming them one at a time implicitly assumes.
  double gps_jitter_sigma = 0.8;      // per-frame isotropic position noise
  double lateral_offset_sigma = 0.2;  // constant per traversal, along normal
  double speed = 10.0;                // m/s, fixes the timestamps
  std::uint64_t rng_seed = 0;
};

enum class CorruptionMode { kBlurLike, kSaltPepperLike };

struct CorruptionSpec {
  double start_fraction = 0.0;  // inclusive, of traversal duration
  double end_fraction = 0.0;    // exclusive
  CorruptionMode mode = CorruptionMode::kBlurLike;
  double severity = 1.0;        // in [0, 1]
};

Traversal generate_traversal(const RouteSpec& route, const TraversalSpec& spec,
                             std::int64_t traversal_id);

// Marks frames whose time fraction falls inside the segment: match-count
// survival drops (blur-like by 0.95 * severity, salt-and-pepper-like by
// 0.98 * severity with heavier-tailed descriptor noise), descriptors are
// perturbed and the appearance seed is remapped. severity 0 is a no-op.
Traversal corrupt(const Traversal& traversal, const CorruptionSpec& spec);

struct ScenarioConfig {
  std::uint64_t seed = 7;
  double route_length = 2000.0;
  double sample_spacing = 1.0;
  double gps_jitter_sigma = 0.8;
  double lateral_offset_sigma = 0.2;
  double speed = 10.0;
};

struct Scenario {
  RouteSpec route;
  std::vector<Traversal> databases;  // ids 1..9, three per condition
  std::vector<Traversal> queries;    // ids 101..103, one per condition
};

// Closed polygonal loop with the requested perimeter.
RouteSpec default_route(double target_length);

// Seed assigned to one traversal of the scenario; recorded in manifests.
std::uint64_t scenario_traversal_seed(std::uint64_t scenario_seed,
                                      std::int64_t traversal_id);

// Nine database traversals (three sunny, three night, three snowy) plus one
// held-out query traversal per condition, all over the same route with
// independent offsets, jitter and appearance seeds.
Scenario make_paper_scenario(const ScenarioConfig& cfg);

}  // namespace vloc::synth
