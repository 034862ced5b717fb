#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vloc/frame.hpp"
#include "vloc/matcher.hpp"

namespace vloc {

struct RetrievalConfig {
  int candidates_per_traversal = 3;  // p
  // Ablation: pool all database frames and take the global descriptor top
  // L*p instead of p per traversal.
  bool pooled = false;
};

struct Candidate {
  std::int64_t traversal_id = 0;
  std::int64_t frame_id = 0;
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  MatchOutcome outcome;
};

struct Prediction {
  Eigen::Vector2d predicted_location = Eigen::Vector2d::Zero();
  std::int64_t source_traversal_id = 0;
  std::int64_t source_frame_id = 0;
  int n_kpm = 0;
  double desc_dist = 0.0;
  std::vector<Candidate> all_candidates;
};

// The p frames of db closest to the query descriptor, ascending by distance,
// ties broken toward the smaller frame_id.
std::vector<const Frame*> retrieve_candidates(const Frame& query,
                                              const Traversal& db, int p,
                                              const Matcher& matcher);

// Retrieves candidates from every database, scores them with the keypoint
// matcher and returns the highest match count as the location estimate.
Prediction predict_location(const Frame& query,
                            std::span<const Traversal> databases,
                            const RetrievalConfig& cfg,
                            const Matcher& matcher);

}  // namespace vloc
