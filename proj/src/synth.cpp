#include "vloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vloc/errors.hpp"
#include "vloc/rng.hpp"

namespace vloc::synth {

namespace {

// Descriptor layout: [0,1] position, [2,3] condition direction, [4,5]
// per-traversal tone, [6..15] per-frame appearance noise. Tone carries the
// largest weight: comparing descriptors across traversals is decided mostly
// by whose tone happens to sit closest to the query's, not by geometry or
// condition. Global descriptor retrieval therefore collapses onto a single
// tone-nearest traversal, regardless of its condition, which is what makes
// pooling every map into one database brittle.
//
// The position encoding passes through a per-condition isometry (an optional
// mirror plus a small rotation) before it enters the descriptor. Within one
// condition distances are exactly preserved and retrieval geometry is
// unaffected; across conditions the most similar descriptor belongs to a
// plausible but wrong location, with an error that sweeps from near zero to
// route scale along the loop. Cross-condition candidates are therefore only
// trustworthy through their local match count, never through descriptor
// distance alone.
constexpr int kPosDim = 0;
constexpr int kCondDim = 2;
constexpr int kToneDim = 4;
constexpr int kNoiseDim = 6;
constexpr double kPositionGain = 0.03;   // descriptor units per meter
constexpr double kConditionWeight = 1.5;
constexpr double kToneSigma = 6.0;
constexpr double kDescNoiseSigma = 0.3;
// A small fraction of frames are perceptually degraded (glare, blur,
// occlusion): noise lands on the whole embedding, the descriptor stops
// encoding the place, retrieval can return anywhere on the route and the
// match count collapses. Calibration must see this failure mode at the same
// magnitude the corruption study injects it, otherwise the lowest bin prices
// junk retrievals far too cheaply.
constexpr double kAliasDescSigma = 15.0;
constexpr double kCorruptDescSigma = 25.0;

struct ConditionProfile {
  double desc_noise_scale;
  double alias_prob;
  double angle;  // direction of the condition component
  double view;   // rotation of the position encoding, radians
  bool mirror;   // reflect y before rotating (still an isometry)
};

ConditionProfile condition_profile(const std::string& condition) {
  if (condition == kSunny) {
    return {1.0, 0.005, 0.0, 0.0, false};
  }
  if (condition == kNight) {
    return {2.0, 0.02, kPi, 0.12, true};
  }
  if (condition == kSnowy) {
    return {1.4, 0.01, kPi / 3.0, -0.07, false};
  }
  std::uint64_t h = 0xc0d1;
  for (const char ch : condition) {
    h = rng::mix(h, static_cast<std::uint64_t>(ch));
  }
  return {1.0, 0.01, 2.0 * kPi * rng::u01(h),
          0.3 * (rng::u01(rng::mix(h, 0x71e3ULL)) - 0.5),
          rng::u01(rng::mix(h, 0x71e4ULL)) < 0.5};
}

}  // namespace

void RouteSpec::validate() const {
  if (waypoints.size() < 2) {
    throw ConfigError("route: at least two waypoints required");
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if ((waypoints[i] - waypoints[i - 1]).norm() <= 0.0) {
      throw ConfigError("route: consecutive waypoints must be distinct");
    }
  }
}

double RouteSpec::total_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    len += (waypoints[i] - waypoints[i - 1]).norm();
  }
  return len;
}

std::pair<Eigen::Vector2d, double> RouteSpec::sample(double s) const {
  validate();
  s = std::clamp(s, 0.0, total_length());
  double walked = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const Eigen::Vector2d seg = waypoints[i] - waypoints[i - 1];
    const double seg_len = seg.norm();
    if (s <= walked + seg_len || i + 1 == waypoints.size()) {
      const double frac = std::clamp((s - walked) / seg_len, 0.0, 1.0);
      const Eigen::Vector2d pt = waypoints[i - 1] + frac * seg;
      return {pt, std::atan2(seg.y(), seg.x())};
    }
    walked += seg_len;
  }
  return {waypoints.back(), 0.0};  // unreachable
}

Traversal generate_traversal(const RouteSpec& route, const TraversalSpec& spec,
                             std::int64_t traversal_id) {
  route.validate();
  if (spec.sample_spacing <= 0.0 || spec.speed <= 0.0 ||
      spec.gps_jitter_sigma < 0.0 || spec.lateral_offset_sigma < 0.0) {
    throw ConfigError("traversal spec: spacing and speed must be positive, "
                      "noise sigmas non-negative");
  }

  const ConditionProfile profile = condition_profile(spec.condition);
  const double length = route.total_length();
  const auto n_frames =
      static_cast<std::int64_t>(std::floor(length / spec.sample_spacing + 1e-9)) + 1;

  // One lateral offset per traversal: distinct recordings of the same route
  // never line up exactly, which keeps cross-traversal errors off zero.
  const double lateral =
      spec.lateral_offset_sigma *
      rng::normal(rng::mix(spec.rng_seed, 0x0ff5e7ULL));
  const double tone_a =
      kToneSigma * rng::normal(rng::mix(spec.rng_seed, 0x70e1ULL));
  const double tone_b =
      kToneSigma * rng::normal(rng::mix(spec.rng_seed, 0x70e2ULL));

  Traversal out;
  out.traversal_id = traversal_id;
  out.frames.reserve(static_cast<std::size_t>(n_frames));
  for (std::int64_t k = 0; k < n_frames; ++k) {
    const double s = static_cast<double>(k) * spec.sample_spacing;
    const auto [pt, heading] = route.sample(s);
    const Eigen::Vector2d normal(-std::sin(heading), std::cos(heading));

    Frame f;
    f.frame_id = traversal_id * 100000 + k;
    f.traversal_id = traversal_id;
    f.t = s / spec.speed;
    f.condition = spec.condition;
    f.appearance_seed =
        rng::mix(spec.rng_seed, static_cast<std::uint64_t>(k), 0xa99eaULL);

    const std::uint64_t frame_key =
        rng::mix(spec.rng_seed, static_cast<std::uint64_t>(k));
    const Eigen::Vector2d jitter(
        spec.gps_jitter_sigma * rng::normal(rng::mix(frame_key, 0x6a1ULL)),
        spec.gps_jitter_sigma * rng::normal(rng::mix(frame_key, 0x6a2ULL)));
    const Eigen::Vector2d pos = pt + lateral * normal + jitter;
    f.pose = {pos.x(), pos.y(), wrap_angle(heading)};

    const double noise_scale = kDescNoiseSigma * profile.desc_noise_scale;
    const bool aliased =
        rng::u01(rng::mix(frame_key, 0xa11a5ULL)) < profile.alias_prob;

    const double cv = std::cos(profile.view);
    const double sv = std::sin(profile.view);
    const double py = profile.mirror ? -pos.y() : pos.y();
    f.descriptor = Eigen::VectorXd::Zero(kDescriptorDim);
    f.descriptor(kPosDim + 0) = kPositionGain * (cv * pos.x() - sv * py);
    f.descriptor(kPosDim + 1) = kPositionGain * (sv * pos.x() + cv * py);
    f.descriptor(kCondDim + 0) = kConditionWeight * std::cos(profile.angle);
    f.descriptor(kCondDim + 1) = kConditionWeight * std::sin(profile.angle);
    f.descriptor(kToneDim + 0) = tone_a;
    f.descriptor(kToneDim + 1) = tone_b;
    for (int d = kNoiseDim; d < kDescriptorDim; ++d) {
      f.descriptor(d) = noise_scale * rng::normal(rng::mix(
          frame_key, 0xde5cULL, static_cast<std::uint64_t>(d)));
    }
    if (aliased) {
      for (int d = 0; d < kDescriptorDim; ++d) {
        f.descriptor(d) += kAliasDescSigma * rng::normal(rng::mix(
            frame_key, 0xa11a6ULL, static_cast<std::uint64_t>(d)));
      }
    }
    out.frames.push_back(std::move(f));
  }
  out.validate();
  return out;
}

Traversal corrupt(const Traversal& traversal, const CorruptionSpec& spec) {
  if (spec.severity < 0.0 || spec.severity > 1.0) {
    throw ConfigError("corrupt: severity must be in [0, 1]");
  }
  if (spec.start_fraction < 0.0 || spec.end_fraction > 1.0 ||
      spec.start_fraction >= spec.end_fraction) {
    throw ConfigError("corrupt: segment must satisfy 0 <= start < end <= 1");
  }
  Traversal out = traversal;
  if (spec.severity == 0.0 || traversal.frames.empty()) {
    return out;
  }

  const double t0 = traversal.frames.front().t;
  const double t1 = traversal.frames.back().t;
  const double span = (t1 > t0) ? (t1 - t0) : 1.0;
  const bool blur = spec.mode == CorruptionMode::kBlurLike;
  const double kill = (blur ? 0.95 : 0.98) * spec.severity;

  for (Frame& f : out.frames) {
    const double frac = (f.t - t0) / span;
    if (frac < spec.start_fraction || frac >= spec.end_fraction) {
      continue;
    }
    // Stacked corruptions compound on the surviving keypoint fraction.
    f.corruption = 1.0 - (1.0 - f.corruption) * (1.0 - kill);
    f.appearance_seed = rng::mix(f.appearance_seed, blur ? 0xb1a4ULL : 0x5a17ULL);
    for (int d = 0; d < f.descriptor.size(); ++d) {
      const std::uint64_t key =
          rng::mix(f.appearance_seed, 0xc0a9ULL, static_cast<std::uint64_t>(d));
      const double amount = kCorruptDescSigma * spec.severity;
      // Salt-and-pepper corruption has heavier tails at matched variance.
      f.descriptor(d) += blur ? amount * rng::normal(key)
                              : rng::laplace(key, amount / std::sqrt(2.0));
    }
  }
  return out;
}

RouteSpec default_route(double target_length) {
  if (target_length <= 0.0) {
    throw ConfigError("route length must be positive");
  }
  // Enough sides that the heading steps stay small relative to what the
  // constant-velocity filter absorbs through its turn-rate noise.
  constexpr int kSides = 360;
  constexpr double kAspect = 1.25;
  RouteSpec unit;
  for (int i = 0; i <= kSides; ++i) {
    const double phi = 2.0 * kPi * static_cast<double>(i % kSides) /
                       static_cast<double>(kSides);
    unit.waypoints.emplace_back(kAspect * std::cos(phi), std::sin(phi));
  }
  const double scale = target_length / unit.total_length();
  for (Eigen::Vector2d& w : unit.waypoints) {
    w *= scale;
  }
  return unit;
}

std::uint64_t scenario_traversal_seed(std::uint64_t scenario_seed,
                                      std::int64_t traversal_id) {
  return rng::mix(scenario_seed, static_cast<std::uint64_t>(traversal_id));
}

Scenario make_paper_scenario(const ScenarioConfig& cfg) {
  Scenario scenario;
  scenario.route = default_route(cfg.route_length);

  const auto make_spec = [&cfg](const std::string& condition,
                                std::int64_t traversal_id) {
    TraversalSpec spec;
    spec.condition = condition;
    spec.sample_spacing = cfg.sample_spacing;
    spec.gps_jitter_sigma = cfg.gps_jitter_sigma;
    spec.lateral_offset_sigma = cfg.lateral_offset_sigma;
    spec.speed = cfg.speed;
    spec.rng_seed = scenario_traversal_seed(cfg.seed, traversal_id);
    return spec;
  };

  const std::vector<std::string> conditions{kSunny, kNight, kSnowy};
  std::int64_t tid = 1;
  for (const std::string& condition : conditions) {
    for (int i = 0; i < 3; ++i, ++tid) {
      scenario.databases.push_back(
          generate_traversal(scenario.route, make_spec(condition, tid), tid));
    }
  }
  std::int64_t qid = 101;
  for (const std::string& condition : conditions) {
    scenario.queries.push_back(
        generate_traversal(scenario.route, make_spec(condition, qid), qid));
    ++qid;
  }
  return scenario;
}

}  // namespace vloc::synth
