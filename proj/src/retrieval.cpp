#include "vloc/retrieval.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "vloc/errors.hpp"

namespace vloc {

namespace {

struct Ranked {
  double dist;
  std::int64_t frame_id;
  const Frame* frame;
  std::int64_t traversal_id;

  bool operator<(const Ranked& o) const {
    return std::tie(dist, traversal_id, frame_id) <
           std::tie(o.dist, o.traversal_id, o.frame_id);
  }
};

std::vector<Ranked> rank_frames(const Frame& query, const Traversal& db,
                                const Matcher& matcher) {
  std::vector<Ranked> ranked;
  ranked.reserve(db.frames.size());
  for (const Frame& f : db.frames) {
    ranked.push_back(
        {matcher.global_distance(query, f), f.frame_id, &f, db.traversal_id});
  }
  return ranked;
}

std::vector<Ranked> take_smallest(std::vector<Ranked> ranked, std::size_t k) {
  k = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
  ranked.resize(k);
  return ranked;
}

}  // namespace

std::vector<const Frame*> retrieve_candidates(const Frame& query,
                                              const Traversal& db, int p,
                                              const Matcher& matcher) {
  if (p < 1) {
    throw ConfigError("retrieve_candidates: p must be >= 1");
  }
  if (db.frames.empty()) {
    throw DataError("retrieve_candidates: database traversal " +
                    std::to_string(db.traversal_id) + " is empty");
  }
  const auto top = take_smallest(rank_frames(query, db, matcher),
                                 static_cast<std::size_t>(p));
  std::vector<const Frame*> out;
  out.reserve(top.size());
  for (const Ranked& r : top) {
    out.push_back(r.frame);
  }
  return out;
}

Prediction predict_location(const Frame& query,
                            std::span<const Traversal> databases,
                            const RetrievalConfig& cfg,
                            const Matcher& matcher) {
  if (cfg.candidates_per_traversal < 1) {
    throw ConfigError("predict_location: candidates_per_traversal must be >= 1");
  }
  const std::size_t p = static_cast<std::size_t>(cfg.candidates_per_traversal);

  std::vector<Ranked> shortlist;
  std::size_t total_frames = 0;
  if (cfg.pooled) {
    std::vector<Ranked> pool;
    for (const Traversal& db : databases) {
      total_frames += db.frames.size();
      auto ranked = rank_frames(query, db, matcher);
      pool.insert(pool.end(), ranked.begin(), ranked.end());
    }
    shortlist = take_smallest(std::move(pool), databases.size() * p);
  } else {
    for (const Traversal& db : databases) {
      total_frames += db.frames.size();
      if (db.frames.empty()) {
        continue;
      }
      auto top = take_smallest(rank_frames(query, db, matcher), p);
      shortlist.insert(shortlist.end(), top.begin(), top.end());
    }
  }
  if (total_frames == 0 || shortlist.empty()) {
    throw DataError("predict_location: all database traversals are empty");
  }

  Prediction pred;
  pred.all_candidates.reserve(shortlist.size());
  const Candidate* best = nullptr;
  for (const Ranked& r : shortlist) {
    Candidate c;
    c.traversal_id = r.traversal_id;
    c.frame_id = r.frame_id;
    c.location = r.frame->pose.position();
    c.outcome = matcher.match(query, *r.frame);
    pred.all_candidates.push_back(c);
  }
  for (const Candidate& c : pred.all_candidates) {
    if (best == nullptr) {
      best = &c;
      continue;
    }
    // Highest match count wins; ties fall back to descriptor distance, then
    // to the smaller frame_id so the outcome is deterministic.
    if (c.outcome.n_kpm > best->outcome.n_kpm ||
        (c.outcome.n_kpm == best->outcome.n_kpm &&
         (c.outcome.desc_dist < best->outcome.desc_dist ||
          (c.outcome.desc_dist == best->outcome.desc_dist &&
           c.frame_id < best->frame_id)))) {
      best = &c;
    }
  }

  pred.predicted_location = best->location;
  pred.source_traversal_id = best->traversal_id;
  pred.source_frame_id = best->frame_id;
  pred.n_kpm = best->outcome.n_kpm;
  pred.desc_dist = best->outcome.desc_dist;
  return pred;
}

}  // namespace vloc
